"""Shared simulation scenarios for the test suite."""

from __future__ import annotations

import numpy as np

from mrkit.bias import simulate_two_sample_summary
from mrkit.types import AliceConfig, SummaryDataset

PLURALITY_BETA = 0.5
N_VALID, N_INVALID = 6, 4


def plurality_config(rng: np.random.Generator, n: int = 20_000) -> AliceConfig:
    """Six valid and four invalid instruments of moderate strength.

    Invalid direct effects are scaled by 1, 1.5, 2 and 2.5 so the invalid
    ratio estimates are pairwise distinct and the valid block is the unique
    largest group.
    """
    p = N_VALID + N_INVALID
    gamma = rng.uniform(0.06, 0.12, p) * rng.choice([-1.0, 1.0], p)
    pi = np.zeros(p)
    pi[N_VALID:] = (
        rng.uniform(0.06, 0.12, N_INVALID)
        * rng.choice([-1.0, 1.0], N_INVALID)
        * np.array([1.0, 1.5, 2.0, 2.5])
    )
    return AliceConfig(
        beta=PLURALITY_BETA, gamma=gamma, psi=pi, sigma_delta_eps=0.5, n1=n, n2=n
    )


def noiseless_plurality(rng: np.random.Generator, n: int = 20_000) -> SummaryDataset:
    """Population associations with the SEs a sample of size ``n`` would carry."""
    cfg = plurality_config(rng, n)
    se = 1.0 / np.sqrt(n)
    ids = [f"v{j}" for j in range(N_VALID)] + [f"x{j}" for j in range(N_INVALID)]
    return SummaryDataset.from_arrays(
        cfg.gamma, se, cfg.big_gamma, se, pval_exposure=1e-20, ids=ids
    )


def noisy_plurality(rng: np.random.Generator, seed, n: int = 20_000) -> SummaryDataset:
    return simulate_two_sample_summary(plurality_config(rng, n), seed)


def valid_ids(data: SummaryDataset) -> set[str]:
    return set(data.ids[:N_VALID])
