"""Parametric simulation of Hardy-Weinberg mixtures and scoring of recovered labels.

Scenario files are YAML::

    n: 400
    pi: [0.3, 0.7]
    seed: 1
    replicates: 20
    loci:
      - name: L1
        clustering: true            # frequencies: one row per population
        frequencies: [[0.70, 0.30], [0.25, 0.75]]
      - name: L3
        clustering: false           # frequencies: one pooled row
        frequencies: [0.85, 0.15]

Replicate ``r`` of a scenario with sample size ``n`` draws from
``numpy.random.default_rng([seed, n, r])`` (PCG64 seeded through ``SeedSequence``),
which is stable across platforms.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np
import yaml
from scipy.optimize import linear_sum_assignment

from .data import GenotypeDataset


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SimScenario:
    """Generating model: ``frequencies[l]`` is (K, A_l) for clustering loci, (A_l,) otherwise."""

    n: int
    pi: np.ndarray
    S0: tuple[int, ...]
    frequencies: tuple
    locus_names: tuple[str, ...]
    seed: int = 0
    replicates: int = 1

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "frequencies", tuple(np.asarray(f, dtype=float) for f in self.frequencies))
        object.__setattr__(self, "S0", tuple(sorted(self.S0)))
        if int(self.n) < 1:
            raise ScenarioError("n: must be >= 1")
        if self.replicates < 1:
            raise ScenarioError("replicates: must be >= 1")
        if pi.ndim != 1 or np.any(pi <= 0) or abs(pi.sum() - 1) > 1e-9:
            raise ScenarioError("pi: proportions must be positive and sum to 1")
        if not self.S0:
            raise ScenarioError("loci: at least one locus must be clustering")
        if len(self.locus_names) != len(self.frequencies):
            raise ScenarioError("loci: names and frequency tables differ in length")
        for l, f in enumerate(self.frequencies):
            name = self.locus_names[l]
            want = 2 if l in self.S0 else 1
            if f.ndim != want or (want == 2 and f.shape[0] != self.K):
                shape = f"({self.K}, A)" if want == 2 else "(A,)"
                raise ScenarioError(f"loci[{name}].frequencies: expected shape {shape}, got {f.shape}")
            if np.any(f < 0) or np.any(np.abs(f.sum(axis=-1) - 1) > 1e-9):
                raise ScenarioError(f"loci[{name}].frequencies: rows must be non-negative and sum to 1")

    @property
    def K(self) -> int:
        return len(self.pi)

    @property
    def n_loci(self) -> int:
        return len(self.frequencies)

    @property
    def n_alleles(self) -> tuple[int, ...]:
        return tuple(f.shape[-1] for f in self.frequencies)

    def with_n(self, n: int) -> "SimScenario":
        return SimScenario(n, self.pi, self.S0, self.frequencies, self.locus_names, self.seed, self.replicates)

    def with_options(self, **changes) -> "SimScenario":
        fields = dict(
            n=self.n, pi=self.pi, S0=self.S0, frequencies=self.frequencies,
            locus_names=self.locus_names, seed=self.seed, replicates=self.replicates,
        )
        fields.update(changes)
        return SimScenario(**fields)

    def to_dict(self) -> dict:
        loci = []
        for l, f in enumerate(self.frequencies):
            loci.append({
                "name": self.locus_names[l],
                "clustering": l in self.S0,
                "frequencies": f.tolist(),
            })
        return {
            "n": int(self.n),
            "pi": self.pi.tolist(),
            "seed": int(self.seed),
            "replicates": int(self.replicates),
            "loci": loci,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SimScenario":
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a mapping")
        for key in ("n", "pi", "loci"):
            if key not in data:
                raise ScenarioError(f"{key}: required field missing")
        loci = data["loci"]
        if not isinstance(loci, list) or not loci:
            raise ScenarioError("loci: must be a non-empty list")
        names, freqs, S0 = [], [], []
        for l, entry in enumerate(loci):
            if not isinstance(entry, dict) or "frequencies" not in entry:
                raise ScenarioError(f"loci[{l}].frequencies: required field missing")
            names.append(str(entry.get("name", f"L{l + 1}")))
            freqs.append(entry["frequencies"])
            if entry.get("clustering", False):
                S0.append(l)
        try:
            return cls(
                n=int(data["n"]),
                pi=data["pi"],
                S0=tuple(S0),
                frequencies=tuple(freqs),
                locus_names=tuple(names),
                seed=int(data.get("seed", 0)),
                replicates=int(data.get("replicates", 1)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(str(exc)) from exc


def load_scenario(path) -> SimScenario:
    with open(path) as fh:
        return SimScenario.from_dict(yaml.safe_load(fh))


def dump_scenario(scenario: SimScenario) -> str:
    return yaml.safe_dump(scenario.to_dict(), sort_keys=False)


def bundled_scenario(name: str) -> SimScenario:
    """``"consistency"`` (2 populations, 4 biallelic loci) or ``"noisy-loci"`` (3 populations, 6 loci)."""
    text = resources.files("genoclust").joinpath("scenarios", f"{name}.yaml").read_text()
    return SimScenario.from_dict(yaml.safe_load(text))


def simulate_dataset(scenario: SimScenario, replicate: int = 0):
    """Draw one dataset; returns ``(dataset, true 0-based population labels)``."""
    rng = np.random.default_rng([scenario.seed, scenario.n, replicate])
    n = scenario.n
    z = rng.choice(scenario.K, size=n, p=scenario.pi)
    codes = np.empty((n, scenario.n_loci, 2), dtype=np.int64)
    for l, f in enumerate(scenario.frequencies):
        cum = np.cumsum(f, axis=-1)
        cum = cum[z] if l in scenario.S0 else np.broadcast_to(cum, (n, f.shape[-1]))
        u = rng.random((n, 2))
        allele = (u[:, :, None] >= cum[:, None, :]).sum(axis=-1)
        codes[:, l, :] = np.minimum(allele, f.shape[-1] - 1) + 1
    ids = [f"ind{i + 1}" for i in range(n)]
    return GenotypeDataset.from_codes(codes, ids, scenario.locus_names), z


def _confusion(z: np.ndarray, zhat: np.ndarray):
    _, zt = np.unique(z, return_inverse=True)
    _, zh = np.unique(zhat, return_inverse=True)
    conf = np.zeros((zt.max() + 1, zh.max() + 1), dtype=np.int64)
    np.add.at(conf, (zt, zh), 1)
    return conf


def matched_count(z, zhat) -> tuple[int, int]:
    """Largest number of individuals agreeing under a one-to-one label matching.

    Returns ``(matched, extra_clusters)`` where ``extra_clusters`` counts labels
    left without a partner. Exhaustive for up to 8 labels on each side.
    """
    conf = _confusion(np.asarray(z), np.asarray(zhat))
    kt, kh = conf.shape
    extra = abs(kt - kh)
    if max(kt, kh) <= 8:
        if kt > kh:
            conf = conf.T
            kt, kh = kh, kt
        rows = np.arange(kt)
        best = max(int(conf[rows, list(p)].sum()) for p in itertools.permutations(range(kh), kt))
        return best, extra
    r, c = linear_sum_assignment(conf, maximize=True)
    return int(conf[r, c].sum()), extra


def score_recovery(z, zhat) -> float:
    """Percentage of individuals misassigned after the best label matching."""
    z = np.asarray(z)
    zhat = np.asarray(zhat)
    if z.shape != zhat.shape:
        raise ValueError("label vectors must have equal length")
    matched, _ = matched_count(z, zhat)
    return 100.0 * (len(z) - matched) / len(z)
