"""Classical designs and analyses: evenly spaced sweeps with a line fit,
and the 9-run 3-factor Latin square with ANOVA effect screening.

The Latin square is the fixed canonical cyclic construction so designs are
reproducible; pass a seed to randomize.  F-scores are compared against a
critical value, default 19.0 (df 2,2 at alpha 0.05)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import yaml

F_CRITICAL_DEFAULT = 19.0


@dataclass(frozen=True)
class SweepResult:
    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float

    def fitted(self) -> np.ndarray:
        return self.slope * self.x + self.intercept

    def to_dict(self) -> dict:
        return {
            "x": [float(v) for v in self.x],
            "y": [float(v) for v in self.y],
            "slope": float(self.slope),
            "intercept": float(self.intercept),
        }


def linspace(lo: float, hi: float, n: int) -> np.ndarray:
    """n evenly spaced values from lo to hi, endpoints exact."""
    if n < 2:
        raise ValueError("linspace needs n >= 2")
    return np.linspace(lo, hi, n)


def fit_line(x, y) -> tuple:
    """Ordinary least squares line fit; returns (slope, intercept)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or len(x) < 2:
        raise ValueError("fit_line needs two equal-length 1-D arrays, n >= 2")
    if np.ptp(x) == 0:
        raise ValueError("cannot fit a line: all x values are equal")
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


def sweep_fit(x, y) -> SweepResult:
    slope, intercept = fit_line(x, y)
    return SweepResult(np.asarray(x, dtype=float), np.asarray(y, dtype=float),
                       slope, intercept)


@dataclass(frozen=True)
class LatinSquareDesign:
    """9 runs over 3 factors x 3 levels; every factor-pair level combination
    occurs exactly once."""

    factors: tuple
    levels: dict
    runs: tuple

    def to_rows(self) -> list:
        return [list(run) for run in self.runs]

    def to_dict(self) -> dict:
        return {
            "factors": list(self.factors),
            "levels": {f: [float(v) for v in ls] for f, ls in self.levels.items()},
            "runs": [[float(v) for v in run] for run in self.runs],
        }

    def to_text(self) -> str:
        width = max(len(f) for f in self.factors) + 2
        header = "run " + "".join(f"{f:>{width}}" for f in self.factors)
        lines = [header]
        for i, run in enumerate(self.runs):
            lines.append(f"{i:>3} " + "".join(f"{v:>{width}.3g}" for v in run))
        return "\n".join(lines)

    def to_yaml(self) -> str:
        return yaml.safe_dump({"schema": "helios-design/1", **self.to_dict()},
                              sort_keys=False)


def latin_square(levels: dict, seed=None) -> LatinSquareDesign:
    """Build the canonical 3x3 Latin square design.

    ``levels`` maps exactly 3 factor names to exactly 3 distinct levels
    each.  Without a seed the cyclic construction is returned unchanged;
    with a seed, rows and level assignments are shuffled (balance is
    preserved either way).
    """
    if len(levels) != 3:
        raise ValueError("latin_square needs exactly 3 factors")
    factors = tuple(levels)
    level_table = {}
    for f in factors:
        ls = tuple(float(v) for v in levels[f])
        if len(ls) != 3 or len(set(ls)) != 3:
            raise ValueError(f"factor {f} needs exactly 3 distinct levels")
        level_table[f] = ls

    index_rows = [(i, j, (i + j) % 3) for i in range(3) for j in range(3)]
    if seed is not None:
        rng = np.random.default_rng(seed)
        perms = [rng.permutation(3) for _ in range(3)]
        index_rows = [tuple(int(perms[k][idx]) for k, idx in enumerate(row))
                      for row in index_rows]
        index_rows = [index_rows[i] for i in rng.permutation(9)]

    runs = tuple(
        tuple(level_table[f][row[k]] for k, f in enumerate(factors))
        for row in index_rows)
    return LatinSquareDesign(factors, level_table, runs)


@dataclass(frozen=True)
class AnovaTable:
    """Per-factor F-scores against a critical value, plus the residual row."""

    effects: tuple            # ((name, f_score, significant), ...)
    residual_df: int
    residual_ms: float
    f_critical: float

    def to_dict(self) -> dict:
        return {
            "effects": [
                {"name": n, "f_score": float(f), "significant": bool(s)}
                for n, f, s in self.effects
            ],
            "residual": {"df": self.residual_df, "mean_square": float(self.residual_ms)},
            "f_critical": float(self.f_critical),
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump({"schema": "helios-anova/1", **self.to_dict()},
                              sort_keys=False)

    def to_text(self, response_name: str = "y") -> str:
        # aligned columns matching the instrument's reference report layout
        header = (f"{response_name}  effect      "
                  f"F-score (fc={self.f_critical:.1f}) Significant")
        lines = [header]
        rows = list(self.effects) + [("residuals", None, False)]
        for i, (name, f, sig) in enumerate(rows):
            if f is None:
                f_txt = "1.0"           # residual MS over itself
            elif np.isinf(f):
                f_txt = "inf"
            else:
                f_txt = f"{f:.6f}"
            lines.append(f"{i}   {name:<11} {f_txt:>17}    {str(sig):>8}")
        return "\n".join(lines)


def anova_effects(design: LatinSquareDesign, response,
                  f_critical: float = F_CRITICAL_DEFAULT) -> AnovaTable:
    """Effect screen for a Latin square run.

    Sum of squares per factor is 3 * sum over levels of (level mean - grand
    mean)^2 with 2 df; the residual takes the remaining 2 df.  A residual
    mean square below 1e-12 of the largest factor mean square reports F as
    +inf (zero-noise runs); a factor with zero sum of squares reports 0.
    """
    y = np.asarray(response, dtype=float)
    if y.shape != (9,):
        raise ValueError("response must have exactly 9 values aligned with the design")
    grand = y.mean()
    ss_total = float(np.sum((y - grand) ** 2))

    ms = {}
    for k, factor in enumerate(design.factors):
        col = np.array([run[k] for run in design.runs])
        ss = 0.0
        for level in design.levels[factor]:
            ss += 3.0 * (y[col == level].mean() - grand) ** 2
        ms[factor] = (ss, ss / 2.0)

    ss_res = ss_total - sum(ss for ss, _ in ms.values())
    ms_res = max(ss_res, 0.0) / 2.0
    ms_max = max(m for _, m in ms.values())

    effects = []
    for factor in design.factors:
        _, ms_f = ms[factor]
        if ms_f == 0.0:
            f_score = 0.0
            significant = False
        elif ms_res < 1e-12 * ms_max:
            f_score = float("inf")
            significant = True
        else:
            f_score = ms_f / ms_res
            significant = f_score > f_critical
        effects.append((f"{factor}_effect", float(f_score), significant))

    return AnovaTable(tuple(effects), residual_df=2, residual_ms=float(ms_res),
                      f_critical=float(f_critical))
