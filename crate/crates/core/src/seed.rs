//! Deterministic per-item seed derivation.

/// One round of splitmix64.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream roles for independent draws inside one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Pair,
    RemeshX,
    RemeshY,
    Partial,
    Rotation,
}

impl Role {
    fn tag(self) -> u64 {
        match self {
            Role::Pair => 1,
            Role::RemeshX => 2,
            Role::RemeshY => 3,
            Role::Partial => 4,
            Role::Rotation => 5,
        }
    }
}

/// Seed for `role` of item `index` under `global`. Independent of how many
/// other items exist, so instances can be regenerated in isolation.
pub fn derive_seed(global: u64, index: u64, role: Role) -> u64 {
    splitmix64(splitmix64(splitmix64(global) ^ index) ^ role.tag())
}
