#!/usr/bin/env python3
"""Writes recognizer fixture weights, a test image and the expected softmax.

The forward pass here is a separate straight-line numpy implementation of
the layer plan (entry conv + BN + ReLU, four separable residual blocks with
2x2 max pooling, 1x1 classifier, global average pooling, softmax). It does
not share code with the C++ kernels.

Usage: make_perception_fixture.py <output dir>
"""
import sys
from pathlib import Path

import numpy as np

EPS = 1e-5
K = 3
ENTRY = 8
BLOCKS = [8, 16, 32, 64]
CLASSES = 7
SIZE = 48


def same_conv(x, w):
    """x: H x W x Cin, w: K x K x Cin x Cout. Cross-correlation, zero padding."""
    h, wd, _ = x.shape
    p = w.shape[0] // 2
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    out = np.zeros((h, wd, w.shape[3]))
    for ky in range(w.shape[0]):
        for kx in range(w.shape[1]):
            out += np.einsum("hwc,cd->hwd", xp[ky:ky + h, kx:kx + wd, :], w[ky, kx])
    return out


def depthwise(x, w):
    """w: K x K x C."""
    h, wd, _ = x.shape
    p = w.shape[0] // 2
    xp = np.pad(x, ((p, p), (p, p), (0, 0)))
    out = np.zeros_like(x)
    for ky in range(w.shape[0]):
        for kx in range(w.shape[1]):
            out += xp[ky:ky + h, kx:kx + wd, :] * w[ky, kx]
    return out


def bn(x, blobs, prefix):
    g, b, m, v = (blobs[f"{prefix}.bn.{n}"] for n in ("gamma", "beta", "mean", "variance"))
    return g * (x - m) / np.sqrt(v + EPS) + b


def pool2(x):
    h, w, c = x.shape
    x = x[: h // 2 * 2, : w // 2 * 2]
    return x.reshape(h // 2, 2, w // 2, 2, c).max(axis=(1, 3))


def forward(img, blobs):
    x = np.maximum(bn(same_conv(img, blobs["entry.conv"]), blobs, "entry"), 0)
    cin = ENTRY
    for i, cout in enumerate(BLOCKS, start=1):
        pre = f"block{i}"
        f = depthwise(x, blobs[f"{pre}.depthwise"]) @ blobs[f"{pre}.pointwise"]
        f = np.maximum(bn(f, blobs, pre), 0)
        short = x @ blobs[f"{pre}.projection"] if cin != cout else x
        x = pool2(f + short)
        cin = cout
    logits = (x @ blobs["classifier.weights"]).mean(axis=(0, 1)) + blobs["classifier.bias"]
    z = np.exp(logits - logits.max())
    return z / z.sum()


def make_blobs(rng):
    blobs = {}

    def add_bn(prefix, c):
        blobs[f"{prefix}.bn.gamma"] = rng.uniform(0.5, 1.5, c)
        blobs[f"{prefix}.bn.beta"] = rng.normal(0, 0.1, c)
        blobs[f"{prefix}.bn.mean"] = rng.normal(0, 0.1, c)
        blobs[f"{prefix}.bn.variance"] = rng.uniform(0.5, 1.5, c)

    blobs["entry.conv"] = rng.normal(0, 0.3, (K, K, 1, ENTRY))
    add_bn("entry", ENTRY)
    cin = ENTRY
    for i, cout in enumerate(BLOCKS, start=1):
        pre = f"block{i}"
        blobs[f"{pre}.depthwise"] = rng.normal(0, 0.3, (K, K, cin))
        blobs[f"{pre}.pointwise"] = rng.normal(0, 1 / np.sqrt(cin), (cin, cout))
        add_bn(pre, cout)
        if cin != cout:
            blobs[f"{pre}.projection"] = rng.normal(0, 1 / np.sqrt(cin), (cin, cout))
        cin = cout
    blobs["classifier.weights"] = rng.normal(0, 1 / np.sqrt(cin), (cin, CLASSES))
    blobs["classifier.bias"] = rng.normal(0, 0.1, CLASSES)
    return blobs


def write(path, blobs):
    with open(path, "w") as f:
        f.write("tomnet 1\n")
        for name in sorted(blobs):
            a = np.asarray(blobs[name], dtype=np.float64)
            f.write(f"blob {name} {a.ndim} {' '.join(map(str, a.shape))}\n")
            flat = a.reshape(-1)
            for i in range(0, flat.size, 8):
                f.write(" ".join(repr(float(v)) for v in flat[i:i + 8]) + "\n")


def main():
    out = Path(sys.argv[1] if len(sys.argv) > 1 else ".")
    rng = np.random.default_rng(2024)
    blobs = make_blobs(rng)
    # smooth face-like blob plus noise, clipped to [0,1]
    yy, xx = np.mgrid[0:SIZE, 0:SIZE] / (SIZE - 1)
    img = 0.5 + 0.4 * np.exp(-((xx - 0.5) ** 2 + (yy - 0.45) ** 2) / 0.08) - 0.3
    img = np.clip(img + rng.normal(0, 0.05, img.shape), 0, 1).reshape(SIZE, SIZE, 1)
    probs = forward(img, blobs)
    write(out / "recognizer.weights", blobs)
    write(out / "face48.image", {"image": img})
    write(out / "face48.expected", {"softmax": probs})
    print("softmax", probs, "sum", probs.sum())


if __name__ == "__main__":
    main()
