#!/usr/bin/env python3
"""Writes the bundled 24-bus desk case and its daily profile.

The network follows the IEEE RTS-24 topology (34 line corridors, parallel circuits merged).
Unit data, frequency parameters, wind and storage placement are constructed for this
project; they are not published data.

usage: make_case24.py OUT_DIR
"""

import json
import math
import sys

import numpy as np

N_BUS = 24
SLACK = 13
P_BASE = 3000.0

# from, to, reactance (p.u. on 100 MVA), rating MW, circuits
BRANCHES = [
    (1, 2, 0.0139, 175, 1), (1, 3, 0.2112, 175, 1), (1, 5, 0.0845, 175, 1), (2, 4, 0.1267, 175, 1),
    (2, 6, 0.1920, 175, 1), (3, 9, 0.1190, 175, 1), (3, 24, 0.0839, 400, 1), (4, 9, 0.1037, 175, 1),
    (5, 10, 0.0883, 175, 1), (6, 10, 0.0605, 175, 1), (7, 8, 0.0614, 175, 1), (8, 9, 0.1651, 175, 1),
    (8, 10, 0.1651, 175, 1), (9, 11, 0.0839, 400, 1), (9, 12, 0.0839, 400, 1), (10, 11, 0.0839, 400, 1),
    (10, 12, 0.0839, 400, 1), (11, 13, 0.0476, 500, 1), (11, 14, 0.0418, 500, 1), (12, 13, 0.0476, 500, 1),
    (12, 23, 0.0966, 500, 1), (13, 23, 0.0865, 500, 1), (14, 16, 0.0389, 500, 1), (15, 16, 0.0173, 500, 1),
    (15, 21, 0.0490, 500, 2), (15, 24, 0.0519, 500, 1), (16, 17, 0.0259, 500, 1), (16, 19, 0.0231, 500, 1),
    (17, 18, 0.0144, 500, 1), (17, 22, 0.1053, 500, 1), (18, 21, 0.0259, 500, 2), (19, 20, 0.0396, 500, 2),
    (20, 23, 0.0216, 500, 2), (21, 22, 0.0678, 500, 1),
]

# Peak bus loads (MW), used only as shares.
BUS_LOAD = {1: 108, 2: 97, 3: 180, 4: 74, 5: 71, 6: 136, 7: 125, 8: 171, 9: 175, 10: 195, 13: 265, 14: 194,
            15: 317, 16: 100, 18: 333, 19: 181, 20: 128}

# type: p_max, p_min, a, b, c, rgc, ramp MW/15min, H, 1/R, F, T
UNIT = {
    "U12": (12, 2.4, 0.328412, 56.564, 86.3852, 10.0, 15, 4.0, 20.0, 0.20, 10.0),
    "U20": (20, 16.0, 0.0, 130.0, 400.6849, 12.0, 45, 4.5, 22.0, 0.30, 10.0),
    "U76": (76, 15.2, 0.014142, 16.0811, 212.3076, 6.0, 30, 5.5, 25.0, 0.15, 11.0),
    "U100": (100, 25.0, 0.052672, 43.6615, 781.521, 8.0, 105, 6.0, 26.0, 0.15, 12.0),
    "U155": (155, 54.3, 0.008342, 12.3883, 382.2391, 5.0, 45, 6.5, 28.0, 0.15, 12.0),
    "U197": (197, 69.0, 0.00717, 48.5804, 832.7575, 7.0, 45, 7.0, 29.0, 0.15, 13.0),
    "U350": (350, 140.0, 0.004895, 11.8495, 665.1094, 5.0, 60, 7.5, 30.0, 0.15, 14.0),
    "U400": (400, 100.0, 0.000213, 4.4231, 395.3749, 4.0, 300, 7.5, 30.0, 0.15, 14.0),
}

PLACEMENT = [
    ("U20", 1), ("U20", 1), ("U76", 1), ("U76", 1),
    ("U20", 2), ("U20", 2), ("U76", 2), ("U76", 2),
    ("U100", 7), ("U100", 7), ("U100", 7),
    ("U197", 13), ("U197", 13), ("U197", 13),
    ("U12", 15), ("U12", 15), ("U12", 15), ("U155", 15),
    ("U155", 16),
    ("U400", 18),
    ("U155", 23), ("U155", 23), ("U350", 23),
]
REGULATING = {"U155", "U197", "U350", "U400"}

WIND = [("W21", 21, 300.0, 0.00), ("W22", 22, 250.0, 0.6), ("W14", 14, 150.0, 1.3)]
ESS = [("S8", 8, 200.0, 800.0), ("S3", 3, 100.0, 400.0)]

# Hourly load shape (fraction of daily peak), hour ending 1..24.
SHAPE = [0.67, 0.63, 0.60, 0.59, 0.59, 0.60, 0.74, 0.86, 0.95, 0.96, 0.96, 0.95,
         0.95, 0.95, 0.93, 0.94, 0.99, 1.00, 1.00, 0.96, 0.91, 0.83, 0.73, 0.63]
PEAK, TROUGH = 2450.0, 1450.0


def ptdf():
    b = np.zeros((N_BUS, N_BUS))
    lines = []
    for f, t, x, rate, n in BRANCHES:
        xe = x / n
        i, j = f - 1, t - 1
        b[i, i] += 1 / xe
        b[j, j] += 1 / xe
        b[i, j] -= 1 / xe
        b[j, i] -= 1 / xe
        lines.append((f, t, xe, rate * n))
    keep = [k for k in range(N_BUS) if k != SLACK - 1]
    xinv = np.zeros((N_BUS, N_BUS))
    xinv[np.ix_(keep, keep)] = np.linalg.inv(b[np.ix_(keep, keep)])
    out = []
    for f, t, xe, rate in lines:
        row = (xinv[f - 1, :] - xinv[t - 1, :]) / xe
        row[np.abs(row) < 1e-12] = 0.0
        out.append({"name": f"L{f}-{t}", "from": f, "to": t, "limit": float(rate),
                    "ptdf": [round(float(v), 12) for v in row]})
    return out


def case():
    gens = []
    count = {}
    cap_reg = sum(UNIT[u][0] for u, _ in PLACEMENT if u in REGULATING)
    for u, bus in PLACEMENT:
        count[u] = count.get(u, 0) + 1
        pmax, pmin, a, b, c, rgc, ramp, h, invr, f, t = UNIT[u]
        gens.append({
            "name": f"{u}_{count[u]}", "bus": bus, "a": a, "b": b, "c": c, "rgc": rgc,
            "p_max": float(pmax), "p_min": pmin, "ramp_up": float(ramp), "ramp_down": float(ramp),
            "beta": round(pmax / cap_reg, 15) if u in REGULATING else 0.0,
            "inertia": h, "inv_droop": invr, "turbine_fraction": f, "time_constant": t,
        })
    drift = 1.0 - sum(g["beta"] for g in gens)
    next(g for g in gens if g["beta"] > 0)["beta"] += drift
    res = [{"name": n, "bus": bus, "cap": cap, "h_max": 5.0, "d_max": 10.0, "h_fixed": 2.0, "d_fixed": 5.0}
           for n, bus, cap, _ in WIND]
    ess = [{"name": n, "bus": bus, "eta_c": 0.95, "eta_d": 0.95, "p_max": p, "e_min": 0.25 * p, "e_max": e,
            "e_init": 0.5 * e, "h_max": 5.0, "d_max": 15.0, "h_fixed": 4.0, "d_fixed": 10.0, "dt_pfr": 0.25}
           for n, bus, p, e in ESS]
    loads = [{"name": f"D{b}", "bus": b} for b in sorted(BUS_LOAD)]
    return {
        "schema_version": 1,
        "name": "case24",
        "n_bus": N_BUS,
        "p_base": P_BASE,
        "load_damping": 2.5,
        "step_hours": 0.25,
        "frequency_limits": {"nominal": 50.0, "max_deviation": 0.5, "rocof": 0.5, "steady_state": 0.25},
        "probabilities": {"gen_up": 0.05, "gen_down": 0.05, "res_reserve": 0.05, "line_plus": 0.05,
                          "line_minus": 0.05},
        "disturbance": {"rule": "load_fraction", "kappa": 0.15},
        "reserve_costs": {"rwc": 300.0, "rec": 50.0},
        "generators": gens,
        "res": res,
        "ess": ess,
        "loads": loads,
        "lines": ptdf(),
    }


def profile():
    hourly = [TROUGH + (s - min(SHAPE)) / (max(SHAPE) - min(SHAPE)) * (PEAK - TROUGH) for s in SHAPE]
    load = []
    for k in range(96):
        # Hour-ending values sit at the end of each hour; interpolate between them.
        pos = (k + 1) / 4.0 - 1.0
        i0 = math.floor(pos) % 24
        i1 = (i0 + 1) % 24
        w = pos - math.floor(pos)
        load.append(round((1 - w) * hourly[i0] + w * hourly[i1], 6))
    total = sum(BUS_LOAD.values())
    share = [BUS_LOAD[b] / total for b in sorted(BUS_LOAD)]
    share[-1] = 1.0 - sum(share[:-1])
    wind = []
    for _, _, _, phase in WIND:
        cf = []
        for k in range(96):
            h = k / 4.0
            v = 0.55 + 0.17 * math.cos(2 * math.pi * (h - 3.0 - phase) / 24.0) + 0.03 * math.sin(2 * math.pi * h / 6.0 + phase)
            cf.append(round(min(0.75, max(0.35, v)), 6))
        wind.append(cf)
    return {"schema_version": 1, "step_minutes": 15, "load": load, "load_share": share,
            "wind": [{"name": n, "capacity_factor": cf} for (n, _, _, _), cf in zip(WIND, wind)]}


def main():
    if len(sys.argv) != 2:
        sys.exit(__doc__)
    out = sys.argv[1]
    with open(f"{out}/case24.json", "w") as f:
        json.dump(case(), f, indent=2)
        f.write("\n")
    with open(f"{out}/profile24.json", "w") as f:
        json.dump(profile(), f, indent=2)
        f.write("\n")


if __name__ == "__main__":
    main()
