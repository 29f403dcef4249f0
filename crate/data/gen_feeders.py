"""Generate the bundled feeder and scenario files.

Run from the repository root: python3 data/gen_feeders.py
Loads are scaled so that the lowest mean-case voltage is TARGET_VMIN.
"""

import json
import math
import random
from pathlib import Path

OUT = Path(__file__).resolve().parent
TARGET_VMIN = 0.93

CONDUCTOR = {"resistance": 1.120, "diameter": 0.398, "gmr": 0.00446, "equivalent_spacing": 4.2848}
X_PER_MILE = 0.12134 * math.log(CONDUCTOR["equivalent_spacing"] / CONDUCTOR["gmr"])


def fbs(nodes, branches, s_kva, v_kv, scale, extra=None):
    """Voltage magnitudes for loads multiplied by `scale` plus unscaled
    `extra` kW per node id."""
    z_base = v_kv**2 * 1000.0 / s_kva
    idx = {n["id"]: i for i, n in enumerate(nodes)}
    parent = {}
    z = {}
    for b in branches:
        c = idx[b["to"]]
        parent[c] = idx[b["from"]]
        if "r_ohm" in b:
            z[c] = complex(b["r_ohm"], b["x_ohm"]) / z_base
        else:
            z[c] = complex(CONDUCTOR["resistance"], X_PER_MILE) * b["length_mi"] / z_base
    order = [0]
    children = {}
    for c, p in parent.items():
        children.setdefault(p, []).append(c)
    for u in order:
        order.extend(sorted(children.get(u, [])))
    extra = extra or {}
    s = [(complex(n["p_kw"], n["q_kvar"]) * scale + extra.get(n["id"], 0.0)) / s_kva for n in nodes]
    v = [1.0 + 0j] * len(nodes)
    for _ in range(200):
        cur = [0j] * len(nodes)
        for u in reversed(order[1:]):
            cur[u] += (s[u] / v[u]).conjugate()
            cur[parent[u]] += cur[u]
        delta = 0.0
        for u in order[1:]:
            new = v[parent[u]] - z[u] * cur[u]
            delta = max(delta, abs(new - v[u]))
            v[u] = new
            if abs(new) < 0.5:
                return None
        if delta < 1e-12:
            return [abs(x) for x in v]
    return None


def scale_loads(feeder, stations):
    """Scale base loads so the case with mean station demand bottoms out at
    TARGET_VMIN."""
    b = feeder["bases"]
    lo, hi = 0.0, 10.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        v = fbs(feeder["nodes"], feeder["branches"], b["s_kva"], b["v_kv"], mid, stations)
        if v is not None and min(v[1:]) > TARGET_VMIN:
            lo = mid
        else:
            hi = mid
    for n in feeder["nodes"]:
        n["p_kw"] = round(n["p_kw"] * lo, 3)
        n["q_kvar"] = round(n["q_kvar"] * lo, 3)
    v = fbs(feeder["nodes"], feeder["branches"], b["s_kva"], b["v_kv"], 1.0, stations)
    return lo, min(v[1:])


# Rough mean station demand in kW: offered load times charger rating times
# availability. Only used to place the operating point.
L1_MEAN_KW = 1.4 * 1.92
L3_MEAN_KW = 2.2 * 48.0


def feeder34():
    # Test-feeder bus names renumbered 1..34 in this order.
    names = [800, 802, 806, 808, 810, 812, 814, 850, 816, 818, 820, 822, 824, 826, 828, 830, 854,
             856, 852, 832, 858, 864, 888, 890, 834, 842, 844, 846, 848, 860, 836, 840, 862, 838]
    num = {name: i + 1 for i, name in enumerate(names)}
    lines_ft = [
        (800, 802, 2580), (802, 806, 1730), (806, 808, 32230), (808, 810, 5804), (808, 812, 37500),
        (812, 814, 29730), (814, 850, 10), (850, 816, 310), (816, 818, 1710), (816, 824, 10210),
        (818, 820, 48150), (820, 822, 13740), (824, 826, 3030), (824, 828, 840), (828, 830, 20440),
        (830, 854, 520), (854, 856, 23330), (854, 852, 36830), (852, 832, 10), (832, 858, 4900),
        (858, 864, 1620), (858, 834, 5830), (834, 842, 280), (834, 860, 2020), (842, 844, 1350),
        (844, 846, 3640), (846, 848, 530), (860, 836, 2680), (836, 840, 860), (836, 862, 280),
        (862, 838, 4860), (888, 890, 10560),
    ]
    # Spot loads plus distributed loads lumped at the far end, kW / kvar.
    loads = {
        806: (55, 29), 810: (16, 8), 820: (34, 17), 822: (135, 70), 824: (5, 2), 826: (40, 20),
        828: (4, 2), 830: (52, 23), 856: (4, 2), 858: (7, 3), 864: (2, 1), 834: (16, 8),
        860: (76, 56), 836: (30, 15), 840: (49, 32), 838: (28, 14), 844: (414, 320),
        846: (25, 12), 848: (83, 59), 890: (450, 225),
    }
    kinds = {810: "station-host", 828: "station-host", 846: "station-host", 844: "industrial"}
    nodes = []
    for name in names:
        p, q = loads.get(name, (2, 1))
        kind = "slack" if name == 800 else kinds.get(name, "residential")
        if name == 800:
            p, q = 0, 0
        nodes.append({"id": num[name], "p_kw": p, "q_kvar": q, "kind": kind})
    branches = [
        {"from": num[a], "to": num[b], "conductor": CONDUCTOR, "length_mi": round(ft / 5280.0, 6)}
        for a, b, ft in lines_ft
    ]
    # In-line transformer, 1.9 + j4.08 % on 500 kVA, referred to the primary.
    z_base = 24.9**2 * 1000.0 / 500.0
    branches.append({"from": num[832], "to": num[888], "r_ohm": round(0.019 * z_base, 4),
                     "x_ohm": round(0.0408 * z_base, 4)})
    return {"bases": {"s_kva": 1000.0, "v_kv": 24.9, "slack_v_pu": 1.0}, "nodes": nodes,
            "branches": branches}


def feeder123():
    rng = random.Random(123)
    parent = {}
    for k in range(2, 124):
        if k == 34:
            parent[k] = 33
        elif k <= 12:
            parent[k] = k - 1
        elif rng.random() < 0.5:
            parent[k] = k - 1
        else:
            # Laterals hang off the trunk below node 4.
            parent[k] = rng.randint(max(4, k - 40), k - 2)
    nodes = [{"id": 1, "p_kw": 0, "q_kvar": 0, "kind": "slack"}]
    hosts = {4, 33, 55, 77, 104, 116}
    for k in range(2, 124):
        if k == 34:
            p = 180.0
            kind = "industrial"
        else:
            p = float(rng.choice([0, 20, 20, 40, 40, 40, 75])) or 5.0
            kind = "station-host" if k in hosts else "residential"
        nodes.append({"id": k, "p_kw": p, "q_kvar": round(0.5 * p, 3), "kind": kind})
    branches = [
        {"from": parent[k], "to": k, "conductor": CONDUCTOR,
         "length_mi": round(rng.uniform(0.03, 0.08), 4)}
        for k in range(2, 124)
    ]
    return {"bases": {"s_kva": 1000.0, "v_kv": 4.16, "slack_v_pu": 1.0}, "nodes": nodes,
            "branches": branches}


FLEET = {
    "battery": {"mean_kwh": 10.0, "std_kwh": 2.0},
    "all_electric_range": 35.0,
    "mileage": {"mu": 3.37, "sigma": 0.5},
    "energy_per_mile": 0.3,
    "charger_efficiency": 0.9,
}


def level1(node, arrival):
    return {"node": node, "level": 1, "charger_voltage": 120.0, "charger_current": 16.0,
            "chargers": 2, "arrival_rate": arrival, **FLEET}


def level3(node, arrival):
    return {"node": node, "level": 3, "charger_voltage": 480.0, "charger_current": 100.0,
            "chargers": 4, "arrival_rate": arrival, **FLEET}


def main():
    f34 = feeder34()
    s34 = scale_loads(f34, {5: L1_MEAN_KW, 15: 0.45 * L3_MEAN_KW, 28: L1_MEAN_KW})
    f123 = feeder123()
    s123 = scale_loads(f123, {4: L1_MEAN_KW, 33: 0.45 * L3_MEAN_KW, 55: L1_MEAN_KW, 77: L1_MEAN_KW,
                              104: 0.45 * L3_MEAN_KW, 116: L1_MEAN_KW})
    (OUT / "feeder34.json").write_text(json.dumps(f34, indent=1) + "\n")
    (OUT / "feeder123.json").write_text(json.dumps(f123, indent=1) + "\n")
    scenario34 = {
        "feeder": "feeder34.json",
        "load_std_fraction": 0.05,
        "stations": [level1(5, 0.3), level3(15, 12.0), level1(28, 0.3)],
        "availability": [{"node": 15, "probability_on": 0.45, "target": "station"}],
        "engine": {"k_n": 45, "mcs_iterations": 5000, "seed": 1, "calibration_samples": 5000},
        "outputs": [5, 15, 28, 34],
    }
    scenario123 = {
        "feeder": "feeder123.json",
        "load_std_fraction": 0.10,
        "stations": [level1(4, 0.3), level3(33, 12.0), level1(55, 0.3), level1(77, 0.3),
                     level3(104, 12.0), level1(116, 0.3)],
        "availability": [
            {"node": 33, "probability_on": 0.45, "target": "station"},
            {"node": 104, "probability_on": 0.45, "target": "station"},
            {"node": 34, "probability_on": 0.45, "target": "load"},
        ],
        "engine": {"k_n": 400, "mcs_iterations": 5000, "seed": 1, "calibration_samples": 5000},
        "outputs": [4, 33, 34, 104],
    }
    (OUT / "scenario34.json").write_text(json.dumps(scenario34, indent=1) + "\n")
    (OUT / "scenario123.json").write_text(json.dumps(scenario123, indent=1) + "\n")
    print(f"feeder34 load scale {s34[0]:.4f} vmin {s34[1]:.4f}")
    print(f"feeder123 load scale {s123[0]:.4f} vmin {s123[1]:.4f}")


if __name__ == "__main__":
    main()
