#!/usr/bin/env python3
"""Reference bilinear resampler and golden-vector generator.

The reference mirrors the coefficient construction of Pillow's
Image.resize(..., Image.BILINEAR): half-pixel centres, a triangle filter
whose support widens by the scale factor when downscaling, per-output
normalisation, horizontal pass followed by vertical pass, and sequential
accumulation in 64-bit floats.

Usage:
    python3 tools/gen_resize_golden.py tests/data/resize_golden.txt

The script cross-checks itself against Pillow's 32-bit float mode when
Pillow is importable, then writes test vectors as hex floats.
"""
import random
import sys


def triangle(x):
    x = abs(x)
    return 1.0 - x if x < 1.0 else 0.0


def coefficients(in_size, out_size):
    scale = in_size / out_size
    filterscale = max(scale, 1.0)
    support = 1.0 * filterscale
    ss = 1.0 / filterscale
    table = []
    for xx in range(out_size):
        center = (xx + 0.5) * scale
        xmin = int(center - support + 0.5)
        if xmin < 0:
            xmin = 0
        xmax = int(center + support + 0.5)
        if xmax > in_size:
            xmax = in_size
        xmax -= xmin
        k = [triangle((x + xmin - center + 0.5) * ss) for x in range(xmax)]
        ww = 0.0
        for w in k:
            ww += w
        if ww != 0.0:
            k = [w / ww for w in k]
        table.append((xmin, k))
    return table


def resize(img, side, target):
    """img: list indexed [(row*side+col)*3+ch]."""
    if target == side:
        return list(img)
    coeff = coefficients(side, target)
    tmp = [0.0] * (side * target * 3)
    for r in range(side):
        for xx, (xmin, k) in enumerate(coeff):
            for ch in range(3):
                acc = 0.0
                for x, w in enumerate(k):
                    acc += img[(r * side + xmin + x) * 3 + ch] * w
                tmp[(r * target + xx) * 3 + ch] = acc
    out = [0.0] * (target * target * 3)
    for yy, (ymin, k) in enumerate(coeff):
        for c in range(target):
            for ch in range(3):
                acc = 0.0
                for y, w in enumerate(k):
                    acc += tmp[((ymin + y) * target + c) * 3 + ch] * w
                out[(yy * target + c) * 3 + ch] = acc
    return out


def pillow_check(img, side, target):
    try:
        from PIL import Image
    except ImportError:
        return
    ours = resize(img, side, target)
    for ch in range(3):
        plane = Image.new("F", (side, side))
        plane.putdata([img[i * 3 + ch] for i in range(side * side)])
        small = plane.resize((target, target), Image.BILINEAR)
        flat = getattr(small, "get_flattened_data", small.getdata)
        got = list(flat())
        for i, v in enumerate(got):
            want = ours[i * 3 + ch]
            assert abs(v - want) <= 1e-4 * max(1.0, abs(want)), (side, target, i, v, want)


def emit(out, name, side, target, img):
    res = resize(img, side, target)
    pillow_check(img, side, target)
    out.write(f"case {name} {side} {target}\n")
    out.write("in " + " ".join(float(v).hex() for v in img) + "\n")
    out.write("out " + " ".join(float(v).hex() for v in res) + "\n")


def main():
    path = sys.argv[1] if len(sys.argv) > 1 else "resize_golden.txt"
    rng = random.Random(20190810)
    cases = []
    cases.append(("identity", 5, 5, [float(rng.randint(0, 255)) for _ in range(75)]))
    cases.append(("constant", 7, 3, [97.0] * (7 * 7 * 3)))
    cases.append(("ramp4to2", 4, 2, [float(16 * (i // 12) + (i // 3) % 4) for i in range(48)]))
    cases.append(("random16to8", 16, 8, [float(rng.randint(0, 255)) for _ in range(768)]))
    cases.append(("random16to11", 16, 11, [rng.uniform(0.0, 255.0) for _ in range(768)]))
    cases.append(("upscale5to9", 5, 9, [float(rng.randint(0, 255)) for _ in range(75)]))
    with open(path, "w") as out:
        out.write("# generated by tools/gen_resize_golden.py\n")
        for name, side, target, img in cases:
            emit(out, name, side, target, img)


if __name__ == "__main__":
    main()
