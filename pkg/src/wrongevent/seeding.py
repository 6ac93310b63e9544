"""Labelled sub-seed derivation from a single master seed."""

import hashlib


def derive_seed(master, *labels) -> int:
    """Stable 63-bit seed from the master seed and a path of labels."""
    key = "/".join([str(int(master))] + [str(x) for x in labels]).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little") >> 1
