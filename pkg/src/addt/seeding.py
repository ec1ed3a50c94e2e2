"""Platform-stable seed derivation for order-independent parallel trials."""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

# Substream tags: one independent generator per randomness concern, so e.g.
# the frame-drop pattern depends only on (trial seed, frame seq, fault spec).
STREAM_SENSOR_NOISE = 0x53454E534F520000
STREAM_TEMPORAL = 0x54454D504F52414C
STREAM_EXTRINSICS = 0x4558545249000000
STREAM_LATENCY = 0x4C4154454E435900
STREAM_FAULTS = 0x4641554C54530000


def splitmix64_mix(value: int) -> int:
    """The splitmix64 finalization function (Stafford mix 13)."""
    z = value & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def derive_seed(master: int, config_hash: int, trial_index: int) -> int:
    """Per-trial seed: splitmix64 mix of master ^ config_hash ^ index*gamma."""
    mixed_index = (trial_index * GOLDEN_GAMMA) & MASK64
    return splitmix64_mix((master ^ config_hash ^ mixed_index) & MASK64)


def substream_seed(trial_seed: int, tag: int) -> int:
    return splitmix64_mix((trial_seed ^ tag) & MASK64)


def fnv1a_64(data: bytes) -> int:
    """64-bit FNV-1a; stable across platforms and Python versions."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h
