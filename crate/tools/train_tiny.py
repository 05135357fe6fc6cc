#!/usr/bin/env python3
"""Train the small suppression network on an AECD dataset and export RESW.

    aec synth-data --manifest tools/train.cfg --out /tmp/train.aecd
    python3 tools/train_tiny.py /tmp/train.aecd models/tiny.resw
"""
import argparse
import struct
import zlib

import numpy as np
import torch
from torch import nn

FEAT = 42
BANDS = 22
WIDTH = 2 * FEAT + 2 + BANDS


def load_aecd(path):
    with open(path, "rb") as f:
        head = f.read(16)
        magic, version, width, count = struct.unpack("<4sIII", head)
        if magic != b"AECD" or version != 1 or width != WIDTH:
            raise SystemExit(f"{path}: not an AECD v1 file with width {WIDTH}")
        data = np.frombuffer(f.read(), dtype="<f4")
    return data[: count * width].reshape(count, width)


class Gru(nn.Module):
    # Matches the engine: blocks z, r, h; one bias; h' = (1 - z) h + z h~.
    def __init__(self, n_in, hidden):
        super().__init__()
        self.hidden = hidden
        k = 1.0 / np.sqrt(hidden)
        self.w = nn.Parameter(torch.empty(3 * hidden, n_in).uniform_(-k, k))
        self.u = nn.Parameter(torch.empty(3 * hidden, hidden).uniform_(-k, k))
        self.b = nn.Parameter(torch.zeros(3 * hidden))

    def forward(self, x):
        h = x.new_zeros(x.shape[0], self.hidden)
        hh = self.hidden
        wx = torch.einsum("btn,gn->btg", x, self.w) + self.b
        u_zr, u_h = self.u[: 2 * hh], self.u[2 * hh :]
        out = []
        for t in range(x.shape[1]):
            zr = torch.sigmoid(wx[:, t, : 2 * hh] + h @ u_zr.T)
            z, r = zr[:, :hh], zr[:, hh:]
            cand = torch.tanh(wx[:, t, 2 * hh :] + (r * h) @ u_h.T)
            h = (1 - z) * h + z * cand
            out.append(h)
        return torch.stack(out, 1)


class Net(nn.Module):
    def __init__(self):
        super().__init__()
        self.input_dense = nn.Linear(2 * FEAT, 24)
        self.vad_far_gru = Gru(24, 24)
        self.vad_near_gru = Gru(24, 24)
        self.vad_far_dense = nn.Linear(24, 1)
        self.vad_near_dense = nn.Linear(24, 1)
        self.echo_est_gru = Gru(48, 48)
        self.suppress_gru = Gru(96, 96)
        self.gain_dense = nn.Linear(96, BANDS)

    def forward(self, x):
        embed = torch.tanh(self.input_dense(x))
        vf = self.vad_far_gru(embed)
        vn = self.vad_near_gru(embed)
        echo = self.echo_est_gru(torch.cat([embed, vf], -1))
        sup = self.suppress_gru(torch.cat([echo, vn, embed], -1))
        return (
            torch.sigmoid(self.vad_near_dense(vn)).squeeze(-1),
            torch.sigmoid(self.vad_far_dense(vf)).squeeze(-1),
            torch.sigmoid(self.gain_dense(sup)),
        )


def vad_loss(pred, target):
    mask = (target != 0.5).float()
    bce = nn.functional.binary_cross_entropy(pred, target, reduction="none")
    return (bce * mask).sum() / mask.sum().clamp(min=1.0)


def export(net, mean, std, path):
    layers = []

    def dense(name, lin, act, w=None, b=None):
        w = lin.weight.detach().double().numpy() if w is None else w
        b = lin.bias.detach().double().numpy() if b is None else b
        layers.append((name, 0, act, w.shape[1], w.shape[0], [w.ravel(), b]))

    def gru(name, g):
        w, u, b = (p.detach().double().numpy() for p in (g.w, g.u, g.b))
        layers.append((name, 1, 0, w.shape[1], g.hidden, [w.ravel(), u.ravel(), b]))

    # Fold the input standardisation into the first layer.
    w = net.input_dense.weight.detach().double().numpy() / std
    b = net.input_dense.bias.detach().double().numpy() - w @ mean
    dense("input_dense", net.input_dense, 0, w, b)
    gru("vad_far_gru", net.vad_far_gru)
    gru("vad_near_gru", net.vad_near_gru)
    dense("vad_far_dense", net.vad_far_dense, 1)
    dense("vad_near_dense", net.vad_near_dense, 1)
    gru("echo_est_gru", net.echo_est_gru)
    gru("suppress_gru", net.suppress_gru)
    dense("gain_dense", net.gain_dense, 1)

    buf = bytearray(b"RESW" + struct.pack("<II", 1, len(layers)))
    for name, kind, act, n_in, n_out, arrays in layers:
        raw = name.encode()
        buf += struct.pack("<H", len(raw)) + raw
        buf += struct.pack("<BBII", kind, act, n_in, n_out)
        for a in arrays:
            buf += np.asarray(a, dtype="<f4").tobytes()
    buf += struct.pack("<I", zlib.crc32(bytes(buf)))
    with open(path, "wb") as f:
        f.write(buf)
    return len(buf)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("dataset")
    ap.add_argument("out")
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seq", type=int, default=250)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--lr", type=float, default=2e-3)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()

    torch.manual_seed(args.seed)
    rng = np.random.default_rng(args.seed)
    data = load_aecd(args.dataset)
    feats = data[:, : 2 * FEAT].astype(np.float64)
    mean, std = feats.mean(0), feats.std(0) + 1e-3
    n_seq = len(data) // args.seq
    data = data[: n_seq * args.seq].reshape(n_seq, args.seq, WIDTH)
    x = torch.tensor((data[..., : 2 * FEAT] - mean) / std, dtype=torch.float32)
    vad_near = torch.tensor(data[..., 2 * FEAT])
    vad_far = torch.tensor(data[..., 2 * FEAT + 1])
    gains = torch.tensor(data[..., 2 * FEAT + 2 :]).clamp(0, 1)

    net = Net()
    opt = torch.optim.Adam(net.parameters(), lr=args.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, args.epochs)
    torch.set_num_threads(1)
    for epoch in range(args.epochs):
        order = rng.permutation(n_seq)
        total = 0.0
        for i in range(0, n_seq, args.batch):
            idx = order[i : i + args.batch]
            pn, pf, pg = net(x[idx])
            loss = (
                vad_loss(pn, vad_near[idx])
                + vad_loss(pf, vad_far[idx])
                + 10.0 * ((pg.sqrt() - gains[idx].sqrt()) ** 2).mean()
            )
            opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(net.parameters(), 1.0)
            opt.step()
            total += loss.item() * len(idx)
        sched.step()
        print(f"epoch {epoch + 1:3d}  loss {total / n_seq:.4f}", flush=True)

    size = export(net, mean, std, args.out)
    print(f"wrote {args.out} ({size} bytes)")


if __name__ == "__main__":
    main()
