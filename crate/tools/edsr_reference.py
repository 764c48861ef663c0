"""Independent numpy forward pass for EDSW1 weight files.

Every subdirectory of the fixture directory holds `weights.edsw` and
`input.json` (a list of equally sized patches); this writes `expected.json`
with the network output for each patch. Used to check the Rust inference
against a second implementation of the same file format and architecture.

    python3 tools/edsr_reference.py fixtures/edsr
"""

import json
import struct
import sys
import zlib
from pathlib import Path

import numpy as np


def read_edsw(path):
    data = Path(path).read_bytes()
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ValueError("EDSW1 checksum mismatch")
    if body[:4] != b"EDSW":
        raise ValueError("bad magic")
    version, n_blocks, channels = struct.unpack_from("<3I", body, 4)
    if version != 1:
        raise ValueError(f"unsupported version {version}")
    residual_scale, radiometric_max = struct.unpack_from("<2f", body, 16)
    off = 24
    tensors = []
    while off < len(body):
        (rank,) = struct.unpack_from("<I", body, off)
        dims = struct.unpack_from(f"<{rank}I", body, off + 4)
        off += 4 + 4 * rank
        n = int(np.prod(dims))
        tensors.append(np.frombuffer(body, "<f4", n, off).reshape(dims).astype(np.float64))
        off += 4 * n
    expected = 2 + 4 * n_blocks + 2
    if len(tensors) != expected:
        raise ValueError(f"expected {expected} tensors, found {len(tensors)}")
    head = (tensors[0], tensors[1])
    blocks = [
        ((tensors[2 + 4 * b], tensors[3 + 4 * b]), (tensors[4 + 4 * b], tensors[5 + 4 * b]))
        for b in range(n_blocks)
    ]
    tail = (tensors[-2], tensors[-1])
    return residual_scale, radiometric_max, head, blocks, tail


def conv3x3(x, conv):
    weight, bias = conv
    c_in, h, w = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1)), mode="reflect")
    out = np.empty((weight.shape[0], h, w))
    for o in range(weight.shape[0]):
        acc = np.full((h, w), bias[o])
        for i in range(c_in):
            for ky in range(3):
                for kx in range(3):
                    acc += weight[o, i, ky, kx] * padded[i, ky:ky + h, kx:kx + w]
        out[o] = acc
    return out


def forward(image, edsw):
    residual_scale, rmax, head, blocks, tail = edsw
    f = conv3x3(image[None] / rmax, head)
    for conv1, conv2 in blocks:
        f = f + residual_scale * conv3x3(np.maximum(conv3x3(f, conv1), 0.0), conv2)
    return conv3x3(f, tail)[0] * rmax


def main(fixture_dir):
    for case in sorted(p for p in Path(fixture_dir).iterdir() if p.is_dir()):
        spec = json.loads((case / "input.json").read_text())
        edsw = read_edsw(case / "weights.edsw")
        shape = (spec["height"], spec["width"])
        outputs = [
            forward(np.asarray(patch, dtype=np.float64).reshape(shape), edsw).ravel().tolist()
            for patch in spec["patches"]
        ]
        (case / "expected.json").write_text(json.dumps({"patches": outputs}) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "fixtures/edsr")
