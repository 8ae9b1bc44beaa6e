#!/usr/bin/env python3
"""Builds the two worked-example cohorts in crates/core/data.

Each cohort is constructed so that the Wilcoxon (asymptotic, tie-corrected,
continuity-corrected) p-values and the inverse-normal concordance estimates
round to fixed targets. Zeros are total responders (zero at both visits);
positive values are distinct except for two optional tie groups per dose
arm: `bi` dose values sharing one value, and `bx` dose values equal to one
placebo value. For m dose subjects with zd zeros against n placebo subjects
with z0 zeros, U = zd*z0/2 + (m - zd)*z0 + k + bx/2, where k counts pairs with
a positive dose value strictly above a positive placebo value. The script
picks (zd, bi, bx, k) per comparison and places values to realise exactly that.
"""

import csv
import math
import sys
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

W1 = math.sqrt(120 / 200)
W2 = math.sqrt(80 / 200)


def ncdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2))


def nsf(x):
    return 0.5 * math.erfc(x / math.sqrt(2))


def ustat(m, zd, z0, k, bx):
    return 0.5 * zd * z0 + (m - zd) * z0 + k + 0.5 * bx


def pvalue(m, n, zd, z0, k, bi=0, bx=0):
    u = ustat(m, zd, z0, k, bx)
    big = m + n
    t = zd + z0
    ties = t**3 - t + bi**3 - bi + ((bx + 1) ** 3 - (bx + 1) if bx else 0)
    tie = ties / (big * (big - 1))
    var = m * n / 12 * ((big + 1) - tie)
    d = u - m * n / 2
    d = d + 0.5
    p = ncdf(d / math.sqrt(var))
    return min(max(p, 1e-15), 1 - 1e-15)


def theta(m, n, zd, z0, k, bi=0, bx=0):
    u = ustat(m, zd, z0, k, bx)
    return (m * n - u) / (m * n)


def variance(th, m, n):
    ns = (m + n) / 2
    v = (th * (1 - th) + (ns - 1) * (th / (2 - th) - th * th) + (ns - 1) * (2 * th * th / (1 + th) - th * th)) / (m * n)
    return max(v, 1e-12)


def inv_normal(stages):
    """stages: list of (weight, theta, m, n). Returns (point, lower)."""

    def p(d):
        z = sum(w * (th - d) / math.sqrt(variance(d, m, n)) for w, th, m, n in stages)
        return nsf(z)

    point = brentq(lambda d: p(d) - 0.5, 0.0, 1.0, xtol=1e-13)
    lower = 0.0 if p(0.0) >= 0.025 else brentq(lambda d: p(d) - 0.025, 0.0, point, xtol=1e-13)
    return point, lower


def rounds_to(x, target, digits, margin):
    scale = 10**digits
    return round(x * scale) == round(target * scale) and abs(x * scale - math.floor(x * scale) - 0.5) > margin * scale


def p_ok(p, target):
    if target == 0.0:
        return p < 0.0004
    return rounds_to(p, target, 3, 2e-5)


TIE_SHAPES = [(0, 0), (0, 1), (2, 0), (0, 2), (3, 0), (2, 1), (0, 3), (4, 0), (3, 1), (2, 2), (4, 1), (3, 2), (5, 0)]


def options_near(m, n, z0, target, zd_range, width):
    """Like `options`, for every p within `width` of target, nearest first."""
    out = []
    seen = set()
    for bi, bx in TIE_SHAPES[:4]:
        for zd in zd_range:
            if bi + bx > m - zd:
                continue
            for k in range(0, (m - zd) * (n - z0) + 1):
                p = pvalue(m, n, zd, z0, k, bi, bx)
                key = (zd, ustat(m, zd, z0, k, bx))
                if abs(p - target) <= width and key not in seen:
                    seen.add(key)
                    out.append((abs(p - target), (zd, bi, bx, k)))
    return [o for _, o in sorted(out)]


def options(m, n, z0, target, zd_range):
    """(zd, bi, bx, k) with p rounding to target; simplest tie shapes first."""
    out = []
    seen = set()
    for bi, bx in TIE_SHAPES:
        for zd in zd_range:
            if bi + bx > m - zd:
                continue
            for k in range(0, (m - zd) * (n - z0) + 1):
                if p_ok(pvalue(m, n, zd, z0, k, bi, bx), target):
                    # one option per (zero count, U) is enough for the estimates
                    key = (zd, ustat(m, zd, z0, k, bx))
                    if key not in seen:
                        seen.add(key)
                        out.append((zd, bi, bx, k))
    return out


def place(placebo_pos, shape, count, rng):
    """`count` dose values against sorted distinct placebo values realising
    shape = (bi, bx, k): bi values sharing one value inside a gap, bx values
    equal to one placebo value, k strict (dose > placebo) pairs overall."""
    bi, bx, k = shape
    p = len(placebo_pos)
    free = count - bi - bx
    centre = k / max(count, 1)
    best = None
    for h in (range(p) if bx else [0]):
        for g in (range(p + 1) if bi else [0]):
            rest = k - bx * h - bi * g
            if 0 <= rest <= free * p:
                score = abs(h - centre) * (bx > 0) + abs(g - centre) * (bi > 0)
                if best is None or score < best[0]:
                    best = (score, h, g, rest)
    assert best is not None, "shape not realisable"
    _, h, g, rest = best
    gaps = np.zeros(free, dtype=int)
    if free:
        c = rest / free
        spread = min(c, p - c)
        gaps = np.clip(np.round(c + (np.arange(free) - (free - 1) / 2) * spread * 2 / free), 0, p).astype(int)
        while gaps.sum() != rest:
            step = 1 if rest > gaps.sum() else -1
            idx = rng.integers(free)
            if 0 <= gaps[idx] + step <= p:
                gaps[idx] += step
    lo = np.concatenate([[placebo_pos[0] * 0.5], placebo_pos])
    hi = np.concatenate([placebo_pos, [placebo_pos[-1] * 1.6]])
    taken = set(placebo_pos.tolist())

    def inside(gap):
        for _ in range(1000):
            v = round(math.exp(rng.uniform(math.log(lo[gap]), math.log(hi[gap]))), 2)
            if v not in taken and lo[gap] < v < hi[gap] or (gap == 0 and v < hi[0] and v > 0 and v not in taken):
                taken.add(v)
                return v
        raise AssertionError("no room in gap")

    vals = [inside(int(x)) for x in gaps]
    if bi:
        v = inside(g)
        vals += [v] * bi
    vals += [float(placebo_pos[h])] * bx
    got = sum((v > q) for v in vals for q in placebo_pos)
    assert got == k, (got, k)
    return vals


def positives(count, mean_log, rng):
    vals = sorted(set(round(math.exp(x), 2) for x in rng.normal(mean_log, 1.0, count)))
    assert len(vals) == count
    return np.array(vals)


def write(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "stage", "dose", "x0", "x1", "x2", "responder"])
        for r in rows:
            w.writerow(r)


def build(name, seed, spec, out_dir):
    """spec: dict with stage arms, zero counts and chosen k per (stage, visit, dose)."""
    rng = np.random.default_rng(seed)
    rows = []
    sid = 1
    for stage, arms in spec["stages"].items():
        zeros = arms["zeros"]
        sizes = arms["sizes"]
        vals = {}
        for visit in (1, 2):
            pl = positives(sizes["placebo"] - zeros["placebo"], 6.0 + 0.2 * visit, rng)
            vals[("placebo", visit)] = list(pl)
            for dose in sizes:
                if dose == "placebo":
                    continue
                shape = arms["k"].get((visit, dose))
                count = sizes[dose] - zeros[dose]
                if shape is None:
                    shape = (0, 0, int(round(count * len(pl) * rng.uniform(0.35, 0.6))))
                vals[(dose, visit)] = place(pl, shape, count, rng)
        for dose in sizes:
            z = zeros[dose]
            pos1 = list(vals[(dose, 1)])
            pos2 = list(vals[(dose, 2)])
            rng.shuffle(pos1)
            rng.shuffle(pos2)
            n = sizes[dose]
            resp = [True] * z + [False] * (n - z)
            rng.shuffle(resp)
            i = 0
            for r in resp:
                x0 = round(math.exp(rng.normal(7.0, 0.9)), 2)
                if r:
                    rows.append([sid, stage, dose, x0, 0, 0, "true"])
                else:
                    rows.append([sid, stage, dose, x0, pos1[i], pos2[i], "false"])
                    i += 1
                sid += 1
    write(out_dir / f"{name}.csv", rows)


def search_trend():
    for z0 in range(2, 9):
        try:
            return trend_with(z0)
        except (AssertionError, StopIteration):
            continue
    raise SystemExit("trend: no placebo zero count works")


def pair(opt6, opt12):
    """Month-6 and Month-12 options agreeing on the zero count."""
    for o12 in opt12:
        for o6 in opt6:
            if o6[0] == o12[0]:
                yield o6, o12
                break


def shape(o):
    return (o[1], o[2], o[3])


def theta_of(m, n, z0, o):
    zd, bi, bx, k = o
    return theta(m, n, zd, z0, k, bi, bx)


def trend_with(z0):
    low6 = options(40, 40, z0, 0.391, range(0, 21))
    low12 = options(40, 40, z0, 0.692, range(0, 21))
    med6 = options(40, 40, z0, 0.047, range(0, 16))
    # The printed medium-dose p-values (0.057, 0.015) imply an estimate of
    # 0.63 (0.53); keep them as close as the 0.64 (0.54) target allows.
    med12 = options_near(40, 40, z0, 0.057, range(0, 16), 0.012)
    z02 = 3
    med2 = options_near(27, 27, z02, 0.015, range(0, 14), 0.008)
    high2 = options(26, 27, z02, 0.0, range(4, 18))
    low = next(pair(low6, low12))
    found = None
    for o6, o12 in pair(med6, med12):
        th1 = theta_of(40, 40, z0, o12)
        p12 = pvalue(40, 40, z0=z0, zd=o12[0], k=o12[3], bi=o12[1], bx=o12[2])
        for o2 in med2:
            pt, lo = inv_normal([(W1, th1, 40, 40), (W2, theta_of(27, 27, z02, o2), 27, 27)])
            if rounds_to(pt, 0.64, 2, 0.001) and rounds_to(lo, 0.54, 2, 0.001):
                p2 = pvalue(27, 27, z0=z02, zd=o2[0], k=o2[3], bi=o2[1], bx=o2[2])
                dist = abs(p12 - 0.057) + abs(p2 - 0.015)
                if found is None or dist < found[0]:
                    found = (dist, o6, o12, o2)
    assert found, "no medium-dose combination"
    found = found[1:]
    hi = None
    for o in high2:
        pt, lo = inv_normal([(1.0, theta_of(26, 27, z02, o), 26, 27)])
        if rounds_to(pt, 0.87, 2, 0.001) and rounds_to(lo, 0.73, 2, 0.001):
            hi = o
            break
    assert hi, "no high-dose combination"
    m6, m12, m2 = found
    return {
        "stages": {
            1: {
                "sizes": {"placebo": 40, "low": 40, "medium": 40},
                "zeros": {"placebo": z0, "low": low[0][0], "medium": m12[0]},
                "k": {(1, "low"): shape(low[0]), (2, "low"): shape(low[1]), (1, "medium"): shape(m6), (2, "medium"): shape(m12)},
            },
            2: {
                "sizes": {"placebo": 27, "medium": 27, "high": 26},
                "zeros": {"placebo": z02, "medium": m2[0], "high": hi[0]},
                "k": {(2, "medium"): shape(m2), (2, "high"): shape(hi)},
            },
        }
    }


def search_all_effective():
    for z0 in range(2, 9):
        try:
            return all_effective_with(z0)
        except (AssertionError, StopIteration):
            continue
    raise SystemExit("all_effective: no placebo zero count works")


def all_effective_with(z0):
    low6 = options(40, 40, z0, 0.002, range(4, 20))
    med6 = options(40, 40, z0, 0.005, range(4, 20))
    low12 = options(40, 40, z0, 0.009, range(4, 20))
    med12 = options(40, 40, z0, 0.001, range(4, 20))
    z02 = 3
    low2 = options(27, 27, z02, 0.045, range(2, 14))
    med2 = options(26, 27, z02, 0.014, range(2, 14))

    def pick(s6, s12, s2, m2, target_pt, target_lo):
        for o6, o12 in pair(s6, s12):
            th1 = theta_of(40, 40, z0, o12)
            for o2 in s2:
                pt, lo = inv_normal([(W1, th1, 40, 40), (W2, theta_of(m2, 27, z02, o2), m2, 27)])
                if rounds_to(pt, target_pt, 2, 0.001) and rounds_to(lo, target_lo, 2, 0.001):
                    return o6, o12, o2
        raise AssertionError("no combination")

    lo6, lo12, lo2 = pick(low6, low12, low2, 27, 0.65, 0.55)
    me6, me12, me2 = pick(med6, med12, med2, 26, 0.70, 0.60)
    return {
        "stages": {
            1: {
                "sizes": {"placebo": 40, "low": 40, "medium": 40},
                "zeros": {"placebo": z0, "low": lo12[0], "medium": me12[0]},
                "k": {(1, "low"): shape(lo6), (2, "low"): shape(lo12), (1, "medium"): shape(me6), (2, "medium"): shape(me12)},
            },
            2: {
                "sizes": {"placebo": 27, "low": 27, "medium": 26},
                "zeros": {"placebo": z02, "low": lo2[0], "medium": me2[0]},
                "k": {(2, "low"): shape(lo2), (2, "medium"): shape(me2)},
            },
        }
    }


def main():
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "crates/core/data"
    out.mkdir(parents=True, exist_ok=True)
    build("trend", 20240501, search_trend(), out)
    build("all_effective", 20240502, search_all_effective(), out)


if __name__ == "__main__":
    main()
