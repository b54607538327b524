"""Kaplan-Meier and Aalen-Johansen estimates on synthetic competing-risk labels.

These estimators power the engine's validation outputs
(figures_data/*_km.csv and *_cif.csv); here they are used directly.

Run:  python demos/03_survival_estimators.py
"""

import numpy as np

from survtensor.labels import (SurvivalLabels, cumulative_incidence, kaplan_meier,
                               label_statistics, truncate_horizon)

rng = np.random.default_rng(5)
n = 2000
durations = rng.exponential(9.0, n)
events = rng.integers(0, 5, n)
labels = SurvivalLabels(stay_ids=tuple(f"s{i}" for i in range(n)),
                        durations=durations, events=events.astype(np.int64), num_risks=4)

horizon = 24.0
labels = truncate_horizon(labels, horizon)
stats = label_statistics(labels)
print(f"{n} stays, horizon {horizon}h")
print(f"censor rate {stats['censor_rate']:.3f}, "
      f"overall event rate {stats['event_rate_overall']:.3f}")
print("per-cause rates:", {k: round(v, 3) for k, v in stats["event_rate"].items()})

km = kaplan_meier(labels)
print("\nall-cause survival:")
for frac in (0.25, 0.5, 0.75, 1.0):
    i = int(frac * (len(km.times) - 1))
    print(f"  S({km.times[i]:6.2f}h) = {km.survival[i]:.4f} "
          f"[{km.ci_lower[i]:.4f}, {km.ci_upper[i]:.4f}]  at risk {km.at_risk[i]}")

cif = cumulative_incidence(labels)
total = cif.survival + sum(cif.cif[k] for k in range(1, 5))
print("\ncumulative incidence at the horizon:")
for k in range(1, 5):
    print(f"  cause {k}: {cif.cif[k][-1]:.4f}")
print(f"  event-free survival: {cif.survival[-1]:.4f}")
print(f"  conservation |S + sum CIF - 1| max: {np.abs(total - 1).max():.2e}")
