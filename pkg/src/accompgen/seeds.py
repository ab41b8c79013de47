"""Named-stream seed derivation.

Every random choice in the pipeline draws from a stream derived from one
root seed plus a path of names, so components stay deterministic and
independent without manual seed bookkeeping.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *names: str) -> int:
    """Derive a 63-bit seed for the stream identified by `names` under `root`."""
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(root)).encode("ascii"))
    for name in names:
        h.update(b"/")
        h.update(name.encode("utf-8"))
    # keep it non-negative and inside torch's accepted manual_seed range
    return int.from_bytes(h.digest(), "little") >> 1


def tag_seed(root: int, tag: str) -> int:
    """Stable per-tag seed used by the hashed text embedder."""
    return derive_seed(root, "tag", tag)
