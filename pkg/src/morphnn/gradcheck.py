"""Finite-difference verification of every trainable piecewise layer.

Each case builds a random instance of one layer, projects the output onto a
fixed random direction to get a scalar loss, and compares reverse-mode
gradients against central differences, one leaf coordinate at a time.

Every loss here is piecewise linear in each coordinate, so one-sided and
central differences agree to rounding error unless a kink sits within the
probe step; coordinates where they disagree are screened out as untestable
(the two-sided slope average is meaningless at a kink) and counted.  A case
whose screened fraction stays too high after a few resamples fails rather
than passing vacuously.
"""

from __future__ import annotations

import itertools
from typing import Callable

import numpy as np

from . import autodiff as ad
from . import morphops as mo
from .activations import (MorphoActivationParams, morpho_act1_forward,
                          morpho_act2_forward, pl_activation)
from .autodiff import Array, Tensor, make_rng
from .morphops import PoolSpec, StructuringFunction

Builder = Callable[[dict[str, Tensor]], Tensor]


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


def _check_case(builder: Builder, draw: Callable[[np.random.Generator], dict],
                rng: np.random.Generator, h: float, kink_tol: float,
                max_resamples: int = 3) -> dict:
    """Compare analytic and numeric gradients for one layer instance."""
    best = None
    for _ in range(max_resamples):
        arrays = draw(rng)
        out_probe = builder({k: Tensor(v) for k, v in arrays.items()})
        proj = rng.normal(size=out_probe.data.shape)

        def loss_np(vals: dict[str, Array]) -> float:
            with ad.no_grad():
                out = builder({k: Tensor(v) for k, v in vals.items()})
            return float((out.data * proj).sum())

        leaves = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        loss = ad.mul(builder(leaves), Tensor(proj)).sum()
        loss.backward()

        base = float(loss.data)
        checked = 0
        screened = 0
        max_err = 0.0
        worst = {"parameter": None, "index": None}
        per_leaf = {}
        for name, arr in arrays.items():
            analytic = leaves[name].grad
            if analytic is None:
                analytic = np.zeros_like(arr)
            leaf_err = 0.0
            leaf_checked = 0
            leaf_screened = 0
            it = np.nditer(arr, flags=["multi_index"])
            while not it.finished:
                i = it.multi_index
                saved = arr[i]
                arr[i] = saved + h
                hi = loss_np(arrays)
                arr[i] = saved - h
                lo = loss_np(arrays)
                arr[i] = saved
                central = (hi - lo) / (2 * h)
                fwd = (hi - base) / h
                bwd = (base - lo) / h
                # piecewise-linear losses: the one-sided slopes differ only
                # when a kink lies inside [x-h, x+h]
                if abs(fwd - bwd) > kink_tol * max(1.0, abs(central)):
                    leaf_screened += 1
                else:
                    leaf_checked += 1
                    err = _rel_err(float(analytic[i]), central)
                    if err > leaf_err:
                        leaf_err = err
                    if err > max_err:
                        max_err = err
                        worst = {"parameter": name, "index": list(i)}
                it.iternext()
            checked += leaf_checked
            screened += leaf_screened
            per_leaf[name] = {"max_rel_err": leaf_err,
                              "checked": leaf_checked,
                              "screened": leaf_screened}
        total = checked + screened
        result = {
            "checked": checked,
            "screened": screened,
            "fraction_checked": checked / total if total else 0.0,
            "max_rel_err": max_err,
            "worst_parameter": worst["parameter"],
            "worst_index": worst["index"],
            "parameters": per_leaf,
        }
        if best is None or result["fraction_checked"] > best["fraction_checked"]:
            best = result
        if best["fraction_checked"] >= 0.9:
            break
    return best


def _pool() -> PoolSpec:
    return PoolSpec((2, 2), (2, 2))


def _sf_bank(leaves: dict[str, Tensor], count: int) -> list[StructuringFunction]:
    window = StructuringFunction.pool_window((2, 2)).offsets
    return [StructuringFunction(window, weights=leaves[f"w{j}"])
            for j in range(count)]


def build_cases(sizes=(1, 2, 3, 4)) -> list[dict]:
    """Case table: two-slope rectifier, self-dual and parametric pooling,
    threshold pooling, and the activation families over the size grid."""
    cases: list[dict] = []

    def draw_two_slope(rng):
        return {"f": rng.normal(size=(7,)) * 2,
                "beta_neg": np.asarray(rng.uniform(-0.5, 0.5)),
                "gap": np.asarray(rng.uniform(0.2, 1.0))}

    def build_two_slope(lv):
        beta_pos = ad.add(lv["beta_neg"], lv["gap"])
        return mo.prelu2(lv["f"], beta_pos, lv["beta_neg"])

    cases.append({"name": "two_slope_rectifier", "build": build_two_slope,
                  "draw": draw_two_slope})

    def draw_field(rng):
        return {"f": rng.normal(size=(1, 2, 6, 6)) * 2}

    cases.append({"name": "selfdual_pool",
                  "build": lambda lv: mo.selfdual_pool(lv["f"], _pool()),
                  "draw": draw_field})

    def draw_posneg(rng):
        d = draw_field(rng)
        d["beta_pos"] = np.asarray(rng.uniform(0.5, 1.5))
        d["beta_neg"] = np.asarray(rng.uniform(0.5, 1.5))
        return d

    cases.append({"name": "posneg_pool_param",
                  "build": lambda lv: mo.posneg_pool_param(
                      lv["f"], _pool(), lv["beta_pos"], lv["beta_neg"]),
                  "draw": draw_posneg})

    def draw_actpool(rng):
        d = draw_field(rng)
        d["alpha"] = np.asarray(rng.normal())
        return d

    cases.append({"name": "act_pool",
                  "build": lambda lv: mo.act_pool(lv["f"], _pool(),
                                                  lv["alpha"]),
                  "draw": draw_actpool})

    for m, n in itertools.product(sizes, sizes):
        def draw_pl(rng, m=m, n=n):
            return {"x": rng.normal(size=(3, 7)) * 2,
                    "beta": rng.normal(size=(m, n)),
                    "alpha": rng.normal(size=(m, n))}

        def build_pl(lv):
            return pl_activation(lv["x"],
                                 MorphoActivationParams(lv["beta"],
                                                        lv["alpha"]))

        cases.append({"name": f"pl_activation_m{m}_n{n}", "build": build_pl,
                      "draw": draw_pl})

    for m, n in itertools.product(sizes, sizes):
        def draw_m1(rng, m=m, n=n):
            d = {"x": rng.normal(size=(1, 2, 5, 5)) * 2,
                 "beta": rng.normal(size=(2, m, n)),
                 "alpha": rng.normal(size=(2, m, n))}
            for j in range(m):
                d[f"w{j}"] = rng.normal(size=(4,)) * 0.3
            return d

        def build_m1(lv, m=m):
            bank = _sf_bank(lv, m)
            return morpho_act1_forward(
                lv["x"], MorphoActivationParams(lv["beta"], lv["alpha"]),
                bank, _pool(), channel_axis=1)

        cases.append({"name": f"morpho1_m{m}_n{n}", "build": build_m1,
                      "draw": draw_m1})

        def draw_m2(rng, m=m, n=n):
            d = {"x": rng.normal(size=(1, 2, 5, 5)) * 2,
                 "beta": rng.normal(size=(2, m, n)),
                 "alpha": rng.normal(size=(2, m, n))}
            for i in range(n):
                d[f"w{i}"] = rng.normal(size=(4,)) * 0.3
            return d

        def build_m2(lv, n=n):
            bank = _sf_bank(lv, n)
            return morpho_act2_forward(
                lv["x"], MorphoActivationParams(lv["beta"], lv["alpha"]),
                bank, _pool(), channel_axis=1)

        cases.append({"name": f"morpho2_m{m}_n{n}", "build": build_m2,
                      "draw": draw_m2})

    return cases


def run_gradcheck(seed: int = 0, tolerance: float = 1e-4, h: float = 1e-5,
                  sizes=(1, 2, 3, 4), kink_tol: float = 1e-6,
                  min_fraction: float = 0.9,
                  corrupt_case: str | None = None) -> dict:
    """Run the whole suite; returns a JSON-ready report.

    ``corrupt_case`` is a testing hook: it perturbs that case's reported
    analytic error so failure paths stay exercised end to end.
    """
    rng = make_rng(seed)
    rows = []
    for case in build_cases(sizes):
        row = _check_case(case["build"], case["draw"], rng, h, kink_tol)
        row["name"] = case["name"]
        if corrupt_case is not None and case["name"] == corrupt_case:
            row["max_rel_err"] = max(row["max_rel_err"], 1.0)
        row["pass"] = (row["max_rel_err"] <= tolerance
                       and row["fraction_checked"] >= min_fraction)
        rows.append(row)
    worst = max(rows, key=lambda r: r["max_rel_err"])
    report = {
        "seed": seed,
        "tolerance": tolerance,
        "step": h,
        "cases": rows,
        "n_cases": len(rows),
        "max_rel_err": worst["max_rel_err"],
        "worst_case": worst["name"],
        "failures": [r["name"] for r in rows if not r["pass"]],
        "failure_detail": [{"layer": r["name"],
                            "parameter": r["worst_parameter"],
                            "index": r["worst_index"],
                            "max_rel_err": r["max_rel_err"]}
                           for r in rows if not r["pass"]],
        "pass": all(r["pass"] for r in rows),
    }
    return report
