#!/usr/bin/env python3
"""Float64 reference forward pass for RESW models; writes parity fixtures.

    python3 tools/nn_reference.py models/tiny.resw crates/core/tests/fixtures

Writes zero.resw, random.resw, one JSON file per model with 100 frames of
inputs and the expected outputs, and gru.json with a single-layer trajectory.
"""
import json
import os
import struct
import sys
import zlib

import numpy as np

LAYOUT = [
    ("input_dense", 0, 0, 84, 24),
    ("vad_far_gru", 1, 0, 24, 24),
    ("vad_near_gru", 1, 0, 24, 24),
    ("vad_far_dense", 0, 1, 24, 1),
    ("vad_near_dense", 0, 1, 24, 1),
    ("echo_est_gru", 1, 0, 48, 48),
    ("suppress_gru", 1, 0, 96, 96),
    ("gain_dense", 0, 1, 96, 22),
]
FRAMES = 100


def parse_resw(blob):
    if zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise ValueError("crc mismatch")
    magic, version, count = struct.unpack_from("<4sII", blob, 0)
    assert magic == b"RESW" and version == 1
    pos, layers = 12, {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", blob, pos)
        name = blob[pos + 2 : pos + 2 + n].decode()
        pos += 2 + n
        kind, act, n_in, n_out = struct.unpack_from("<BBII", blob, pos)
        pos += 10
        if kind == 0:
            sizes = [n_out * n_in, n_out]
        else:
            sizes = [3 * n_out * n_in, 3 * n_out * n_out, 3 * n_out]
        arrays = []
        for s in sizes:
            arrays.append(np.frombuffer(blob, "<f4", s, pos).astype(np.float64))
            pos += 4 * s
        layers[name] = (kind, act, n_in, n_out, arrays)
    return layers


def write_resw(path, arrays_by_name):
    buf = bytearray(b"RESW" + struct.pack("<II", 1, len(LAYOUT)))
    for name, kind, act, n_in, n_out in LAYOUT:
        raw = name.encode()
        buf += struct.pack("<H", len(raw)) + raw + struct.pack("<BBII", kind, act, n_in, n_out)
        for a in arrays_by_name[name]:
            buf += np.asarray(a, "<f4").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    with open(path, "wb") as f:
        f.write(buf)
    return bytes(buf)


def make_arrays(fill):
    out = {}
    for name, kind, _, n_in, n_out in LAYOUT:
        if kind == 0:
            out[name] = [fill(n_out * n_in, n_in), fill(n_out, n_in)]
        else:
            out[name] = [fill(3 * n_out * n_in, n_in), fill(3 * n_out * n_out, n_out), fill(3 * n_out, n_out)]
    return out


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


ACT = {0: np.tanh, 1: sigmoid, 2: lambda x: np.maximum(x, 0.0)}


class Reference:
    def __init__(self, layers):
        self.layers = layers
        self.state = {k: np.zeros(layers[k][3]) for k in layers if layers[k][0] == 1}

    def dense(self, name, x):
        _, act, n_in, n_out, (w, b) = self.layers[name]
        return ACT[act](w.reshape(n_out, n_in) @ x + b)

    def gru(self, name, x):
        _, _, n_in, h_dim, (w, u, b) = self.layers[name]
        w, u, h = w.reshape(3 * h_dim, n_in), u.reshape(3 * h_dim, h_dim), self.state[name]
        wx = w @ x + b
        z = sigmoid(wx[:h_dim] + u[:h_dim] @ h)
        r = sigmoid(wx[h_dim : 2 * h_dim] + u[h_dim : 2 * h_dim] @ h)
        cand = np.tanh(wx[2 * h_dim :] + u[2 * h_dim :] @ (r * h))
        self.state[name] = (1 - z) * h + z * cand
        return self.state[name]

    def step(self, far, near):
        embed = self.dense("input_dense", np.concatenate([far, near]))
        vf = self.gru("vad_far_gru", embed)
        vn = self.gru("vad_near_gru", embed)
        echo = self.gru("echo_est_gru", np.concatenate([embed, vf]))
        sup = self.gru("suppress_gru", np.concatenate([echo, vn, embed]))
        return {
            "vad_near": float(self.dense("vad_near_dense", vn)[0]),
            "vad_far": float(self.dense("vad_far_dense", vf)[0]),
            "gains": self.dense("gain_dense", sup).tolist(),
        }


def fixture(model_file, blob, rng):
    ref = Reference(parse_resw(blob))
    # Feature-like inputs: a large log-energy term, smaller cepstral terms.
    scale = np.concatenate([[20.0], np.full(41, 2.0)])
    offset = np.concatenate([[-30.0], np.zeros(41)])
    frames = []
    for _ in range(FRAMES):
        far = rng.standard_normal(42) * scale + offset
        near = rng.standard_normal(42) * scale + offset
        far32, near32 = far.astype(np.float32), near.astype(np.float32)
        out = ref.step(far32.astype(np.float64), near32.astype(np.float64))
        frames.append({"far": far32.tolist(), "near": near32.tolist(), **out})
    return {"model": model_file, "frames": frames}


def gru_fixture(rng, n_in=12, hidden=8, steps=10):
    w = rng.uniform(-1, 1, 3 * hidden * n_in).astype(np.float32)
    u = rng.uniform(-1, 1, 3 * hidden * hidden).astype(np.float32)
    b = rng.uniform(-0.5, 0.5, 3 * hidden).astype(np.float32)
    layers = {"g": (1, 0, n_in, hidden, [a.astype(np.float64) for a in (w, u, b)])}
    ref = Reference(layers)
    inputs, states = [], []
    for _ in range(steps):
        x = rng.uniform(-2, 2, n_in).astype(np.float32)
        inputs.append(x.tolist())
        states.append(ref.gru("g", x.astype(np.float64)).tolist())
    return {
        "inputs": n_in,
        "hidden": hidden,
        "input_weights": w.tolist(),
        "recurrent_weights": u.tolist(),
        "bias": b.tolist(),
        "sequence": inputs,
        "states": states,
    }


def main():
    trained, out_dir = sys.argv[1], sys.argv[2]
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(20240)
    zero = write_resw(os.path.join(out_dir, "zero.resw"), make_arrays(lambda n, fan: np.zeros(n)))
    rand = write_resw(
        os.path.join(out_dir, "random.resw"),
        make_arrays(lambda n, fan: rng.uniform(-1, 1, n) / np.sqrt(fan)),
    )
    with open(trained, "rb") as f:
        tiny = f.read()
    cases = [("zero", "zero.resw", zero), ("random", "random.resw", rand), ("tiny", trained, tiny)]
    with open(os.path.join(out_dir, "gru.json"), "w") as f:
        json.dump(gru_fixture(rng), f)
    for tag, model_file, blob in cases:
        data = fixture(os.path.basename(model_file), blob, rng)
        with open(os.path.join(out_dir, f"{tag}.json"), "w") as f:
            json.dump(data, f)
        print(f"{tag}: {len(data['frames'])} frames")


if __name__ == "__main__":
    main()
