"""Ready-made fleets: the two-data-center topology and a small CI fleet."""

from __future__ import annotations

import numpy as np

from carbonsched.core import FlexClass, ProblemConfig
from carbonsched.scenarios import GeneratorSpec, generate_cost_signals


def twodc_fleet(
    capacity: float = 0.05,
    infra: float = 5.0,
    price_base: float = 1.0,
    price_amplitude: float = 0.5,
    delay: int = 10,
    beta: float = 0.2,
    epsilon: float = 8e-3,
    seed: int = 0,
) -> tuple[ProblemConfig, GeneratorSpec]:
    """Two data centers with two clusters each and seven flexibility classes.

    Classes 1-4 are bound to clusters 1-4, class 5 to data center {1, 2},
    class 6 to data center {3, 4}, class 7 runs anywhere. Loads are normalized
    to a unit daily total, so ``capacity`` is in fractions of daily volume.
    """
    K, D = 24, 4
    ranges = [(1,), (2,), (3,), (4,), (1, 2), (3, 4), (1, 2, 3, 4)]
    classes = tuple(FlexClass(c + 1, delay, r) for c, r in enumerate(ranges))
    T = K + delay
    carbon, infra_price = generate_cost_signals(T, D, price_base, price_amplitude, infra=infra)
    config = ProblemConfig(
        K=K,
        D=D,
        classes=classes,
        true_capacity=np.full((T, D), capacity),
        carbon_price=carbon,
        infra_price=infra_price,
        beta=beta,
        epsilon=epsilon,
        name="twodc",
    )
    spec = GeneratorSpec(
        K=K,
        base=[1.0] * 7,
        amplitude=[0.6, 0.5, 0.7, 0.4, 0.6, 0.5, 0.3],
        phase=[14.0, 12.0, 16.0, 10.0, 13.0, 15.0, 12.0],
        noise=[0.2] * 7,
        volume=[0.12, 0.12, 0.12, 0.12, 0.14, 0.14, 0.24],
        jobs_per_cell=20,
        seed=seed,
    )
    return config, spec


def ci_fleet(
    capacity: float = 0.5,
    infra: float = 2.0,
    beta: float = 0.2,
    epsilon: float = 8e-3,
    seed: int = 0,
) -> tuple[ProblemConfig, GeneratorSpec]:
    """Desk-scale fleet: 6 submission hours, 2 classes, 2 clusters, 2 hours of delay."""
    K, D, delay = 6, 2, 2
    classes = (FlexClass(1, delay, (1,)), FlexClass(2, delay, (1, 2)))
    T = K + delay
    carbon, infra_price = generate_cost_signals(T, D, 1.0, 0.5, infra=infra)
    config = ProblemConfig(
        K=K,
        D=D,
        classes=classes,
        true_capacity=np.full((T, D), capacity),
        carbon_price=carbon,
        infra_price=infra_price,
        beta=beta,
        epsilon=epsilon,
        name="ci",
    )
    spec = GeneratorSpec(
        K=K,
        base=[1.0, 1.0],
        amplitude=[0.5, 0.3],
        phase=[0.0, 2.0],
        noise=[0.25, 0.25],
        volume=[0.5, 0.5],
        jobs_per_cell=20,
        seed=seed,
    )
    return config, spec


FLEETS = {"twodc": twodc_fleet, "ci": ci_fleet}
