#!/usr/bin/env python3
"""Generate a desk-scale handwritten-digit stand-in dataset in IDX format.

Renders digits 0-9 with several fonts under random affine jitter, blur and
noise, producing 28x28 grayscale images in the classic IDX layout
(train-images-idx3-ubyte etc.). Used when the original MNIST files are not
available locally.
"""
import argparse
import glob
import os
import struct
import sys

import numpy as np
from PIL import Image, ImageDraw, ImageFilter, ImageFont

FONT_DIRS = [
    "/usr/local/lib/python3.10/dist-packages/matplotlib/mpl-data/fonts/ttf",
    "/usr/share/fonts/truetype/dejavu",
]
FONT_NAMES = [
    "DejaVuSans.ttf",
    "DejaVuSans-Bold.ttf",
    "DejaVuSerif.ttf",
    "DejaVuSerif-Bold.ttf",
    "DejaVuSansMono.ttf",
    "cmb10.ttf",
    "cmr10.ttf",
    "STIXGeneral.ttf",
]


def find_fonts():
    found = []
    for d in FONT_DIRS:
        for name in FONT_NAMES:
            path = os.path.join(d, name)
            if os.path.exists(path):
                found.append(path)
    if not found:
        found = sorted(glob.glob(os.path.join(FONT_DIRS[0], "*.ttf")))[:4]
    if not found:
        sys.exit("no usable TTF fonts found")
    return found


def render_digit(digit, font_path, rng):
    size = rng.integers(30, 44)
    font = ImageFont.truetype(font_path, int(size))
    big = Image.new("L", (64, 64), 0)
    draw = ImageDraw.Draw(big)
    bbox = draw.textbbox((0, 0), str(digit), font=font)
    w, h = bbox[2] - bbox[0], bbox[3] - bbox[1]
    draw.text((32 - w / 2 - bbox[0], 32 - h / 2 - bbox[1]), str(digit), fill=255, font=font)

    angle = rng.uniform(-12, 12)
    big = big.rotate(angle, resample=Image.BILINEAR, center=(32, 32))
    dx, dy = rng.integers(-2, 3, size=2)
    big = big.transform((64, 64), Image.AFFINE, (1, 0, dx, 0, 1, dy), resample=Image.BILINEAR)
    big = big.filter(ImageFilter.GaussianBlur(rng.uniform(0.3, 0.9)))

    img = big.resize((28, 28), Image.LANCZOS)
    arr = np.asarray(img, dtype=np.float64) / 255.0
    # multiplicative stroke noise keeps the background exactly zero,
    # matching the statistics of scanned-digit data
    arr = arr * rng.uniform(0.85, 1.0) * (1 + rng.normal(0, 0.06, arr.shape))
    return np.clip(arr, 0, 1)


def write_idx(images, labels, img_path, lab_path):
    n = len(images)
    with open(img_path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, n, 28, 28))
        for img in images:
            f.write((img * 255).round().astype(np.uint8).tobytes())
    with open(lab_path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, n))
        f.write(bytes(int(l) for l in labels))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--train", type=int, default=10000)
    ap.add_argument("--test", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=12345)
    args = ap.parse_args()

    fonts = find_fonts()
    rng = np.random.default_rng(args.seed)
    os.makedirs(args.out, exist_ok=True)

    for split, count in (("train", args.train), ("t10k", args.test)):
        images, labels = [], []
        for i in range(count):
            digit = i % 10
            font = fonts[int(rng.integers(0, len(fonts)))]
            images.append(render_digit(digit, font, rng))
            labels.append(digit)
        order = rng.permutation(count)
        images = [images[i] for i in order]
        labels = [labels[i] for i in order]
        write_idx(images, labels,
                  os.path.join(args.out, f"{split}-images-idx3-ubyte"),
                  os.path.join(args.out, f"{split}-labels-idx1-ubyte"))
        print(f"wrote {count} {split} images to {args.out}")


if __name__ == "__main__":
    main()
