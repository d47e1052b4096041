#!/usr/bin/env python3
"""Stand-in intra codec with the same command-line surface as the reference
HEVC/VVC encoders this package shells out to.

It reads a planar 8-bit YUV420 frame, applies a qp-dependent uniform
quantization to every sample (coarser steps at higher qp, so reconstruction
quality decreases monotonically in qp), writes the "bitstream" and the
reconstruction. Deterministic; pure stdlib so it starts fast.

Usage (flags mirror the reference encoders; extras are ignored):
    stub_codec.py -i in.yuv -b out.bin -o recon.yuv -wdt W -hgt H -q QP -f 1 -fr 30
"""

import sys


def parse_args(argv):
    args = {}
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok.startswith("-"):
            args[tok.lstrip("-")] = argv[i + 1] if i + 1 < len(argv) else None
            i += 2
        else:
            i += 1
    return args


def main(argv):
    args = parse_args(argv)
    try:
        src = args["i"]
        recon = args["o"]
        width = int(args["wdt"])
        height = int(args["hgt"])
        qp = int(args["q"])
    except (KeyError, TypeError, ValueError):
        sys.stderr.write("stub_codec: missing or invalid arguments\n")
        return 2

    frames = int(args.get("f", 1) or 1)
    frame_len = width * height + 2 * ((width // 2) * (height // 2))
    with open(src, "rb") as fh:
        data = fh.read()
    if len(data) < frame_len * frames:
        sys.stderr.write("stub_codec: input shorter than the requested frame count\n")
        return 3

    step = max(1, round(2 ** ((qp - 18) / 6.0)))
    table = bytes(min(255, round(v / step) * step) for v in range(256))
    out = data[: frame_len * frames].translate(table)

    bitstream = args.get("b")
    if bitstream:
        with open(bitstream, "wb") as fh:
            fh.write(out)
    with open(recon, "wb") as fh:
        fh.write(out)
    return 0


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
