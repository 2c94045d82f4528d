"""Writes the handcrafted PLY fixtures used by the unit tests."""

import math
import struct
import sys
from pathlib import Path

PROPS = ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity",
         "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]

# mean, log scales, quaternion (w, x, y, z, not normalized), opacity logit
THREE_SPLATS = [
    ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0), 2.0),
    ((1.0, 2.0, 3.0), (math.log(0.5), math.log(2.0), math.log(1.0)),
     (2.0, 0.0, 0.0, 2.0), 1.5),
    ((-2.0, 1.0, 0.5), (math.log(0.25), math.log(0.75), math.log(1.5)),
     (0.9, 0.3, -0.2, 0.1), 3.0),
]

# The middle splat has opacity sigmoid(-3) ~ 0.047, below the default 0.1.
ONE_TRANSPARENT = [
    THREE_SPLATS[0],
    ((4.0, 0.0, 0.0), (0.0, 0.0, 0.0), (1.0, 0.0, 0.0, 0.0), -3.0),
    THREE_SPLATS[2],
]


def write(path, splats):
    header = ["ply", "format binary_little_endian 1.0", f"element vertex {len(splats)}"]
    header += [f"property float {p}" for p in PROPS]
    header.append("end_header")
    body = b""
    for mean, scales, rot, logit in splats:
        values = dict(zip(["x", "y", "z"], mean))
        values.update(zip(["scale_0", "scale_1", "scale_2"], scales))
        values.update(zip(["rot_0", "rot_1", "rot_2", "rot_3"], rot))
        values.update({"opacity": logit, "f_dc_0": 0.1, "f_dc_1": 0.2, "f_dc_2": 0.3})
        body += struct.pack("<" + "f" * len(PROPS), *(values[p] for p in PROPS))
    path.write_bytes(("\n".join(header) + "\n").encode() + body)


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).parent.parent / "tests" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    write(out / "three_splats.ply", THREE_SPLATS)
    write(out / "one_transparent.ply", ONE_TRANSPARENT)


if __name__ == "__main__":
    main()
