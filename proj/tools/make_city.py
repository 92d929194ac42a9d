#!/usr/bin/env python3
"""Generate the bundled synthetic city: road network and demand intensity.

Usage: make_city.py OUTDIR [--seed N] [--trips-per-day N]
"""

import argparse
import json
import math
import random
from pathlib import Path

COLS, ROWS = 20, 10
DX, DY = 700.0, 900.0
JITTER = 150.0
CELL = 700.0
ORIGIN = (-350.0, -350.0)
GRID_ROWS, GRID_COLS = 13, 20
BINS = 48


def build_network(rng):
    nodes = []
    for r in range(ROWS):
        for c in range(COLS):
            nodes.append({
                "id": r * COLS + c,
                "x": round(c * DX + rng.uniform(-JITTER, JITTER), 1),
                "y": round(r * DY + rng.uniform(-JITTER, JITTER), 1),
            })

    def dist(a, b):
        return math.hypot(nodes[a]["x"] - nodes[b]["x"], nodes[a]["y"] - nodes[b]["y"])

    pairs = []
    for r in range(ROWS):
        for c in range(COLS):
            n = r * COLS + c
            if c + 1 < COLS:
                pairs.append((n, n + 1))
            if r + 1 < ROWS:
                pairs.append((n, n + COLS))
            if c + 1 < COLS and r + 1 < ROWS and rng.random() < 0.15:
                pairs.append((n, n + COLS + 1))
    # Drop a few local streets; the spanning rows and columns keep it connected.
    kept = []
    for a, b in pairs:
        ra, ca = divmod(a, COLS)
        rb, cb = divmod(b, COLS)
        arterial = ra % 3 == 0 and rb == ra or ca % 4 == 0 and cb == ca
        if not arterial and rng.random() < 0.08:
            continue
        kept.append((a, b))
    segments = [
        {"id": i, "a": a, "b": b, "length_m": round(dist(a, b) * rng.uniform(1.0, 1.2), 1)}
        for i, (a, b) in enumerate(kept)
    ]
    return {"nodes": nodes, "segments": segments}


def hour_share(h):
    # Morning and evening peaks over a night trough.
    base = 0.25 + 0.75 * math.exp(-((h - 8.5) ** 2) / 3.0) + 0.85 * math.exp(-((h - 18.5) ** 2) / 4.0)
    base += 0.45 * math.exp(-((h - 13.0) ** 2) / 6.0)
    if h < 5 or h >= 23:
        base *= 0.35
    return base


def build_intensity(net, trips_per_day):
    occupied = set()
    for n in net["nodes"]:
        c = min(GRID_COLS - 1, max(0, int((n["x"] - ORIGIN[0]) // CELL)))
        r = min(GRID_ROWS - 1, max(0, int((n["y"] - ORIGIN[1]) // CELL)))
        occupied.add(r * GRID_COLS + c)

    # (centre x, centre y, spread m, weight per hour)
    # Compact core around the city centre; the periphery sees little demand.
    residential = [(5000.0, 3000.0, 900.0), (5600.0, 5600.0, 800.0)]
    business = [(8200.0, 4300.0, 800.0), (6800.0, 3600.0, 700.0)]
    leisure = [(7000.0, 5400.0, 900.0)]

    def field(x, y, spots):
        return sum(math.exp(-((x - sx) ** 2 + (y - sy) ** 2) / (2 * s * s)) for sx, sy, s in spots)

    shares = [hour_share((b + 0.5) / 2.0) for b in range(BINS)]
    total_share = sum(shares)
    rates = []
    for b in range(BINS):
        h = (b + 0.5) / 2.0
        w_res = math.exp(-((h - 8.0) ** 2) / 4.0)
        w_bus = math.exp(-((h - 18.0) ** 2) / 5.0) + 0.3 * math.exp(-((h - 12.5) ** 2) / 4.0)
        w_lei = math.exp(-((h - 21.0) ** 2) / 6.0) + 0.2
        weights = []
        for cell in range(GRID_ROWS * GRID_COLS):
            if cell not in occupied:
                weights.append(0.0)
                continue
            r, c = divmod(cell, GRID_COLS)
            x = ORIGIN[0] + (c + 0.5) * CELL
            y = ORIGIN[1] + (r + 0.5) * CELL
            w = 0.01 + 1.5 * w_res * field(x, y, residential) + 1.8 * w_bus * field(x, y, business)
            w += 1.2 * w_lei * field(x, y, leisure)
            weights.append(w)
        wsum = sum(weights)
        bin_trips = trips_per_day * shares[b] / total_share
        rates.extend(round(bin_trips * w / wsum, 6) for w in weights)
    return {"bins": BINS, "rows": GRID_ROWS, "cols": GRID_COLS, "rates": rates}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("outdir", type=Path)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--trips-per-day", type=float, default=1000.0)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    args.outdir.mkdir(parents=True, exist_ok=True)
    net = build_network(rng)
    (args.outdir / "network.json").write_text(json.dumps(net, indent=1) + "\n")
    intensity = build_intensity(net, args.trips_per_day)
    (args.outdir / "intensity.json").write_text(json.dumps(intensity) + "\n")
    print(f"{len(net['nodes'])} nodes, {len(net['segments'])} segments, "
          f"{sum(intensity['rates']):.1f} expected trips/day")


if __name__ == "__main__":
    main()
