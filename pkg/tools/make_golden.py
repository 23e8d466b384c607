#!/usr/bin/env python3
"""Regenerate the frozen wire-format vectors under tests/golden/."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

from test_framing import golden_frames  # noqa: E402

from vqcom.framing import serialize  # noqa: E402

out = Path(__file__).resolve().parent.parent / "tests" / "golden"
out.mkdir(parents=True, exist_ok=True)
for i, frame in enumerate(golden_frames()):
    blob = serialize(frame)
    (out / f"frame_{i:02d}.bin").write_bytes(blob)
    print(f"frame_{i:02d}.bin {len(blob)} bytes")
