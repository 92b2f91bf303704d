"""Regression fixtures recorded from a first oracle run of the default batteries.

Regenerate with ``python -m fdlab.fixtures`` after an intentional change in
the numerics; the values are then stored in ``fixtures.json`` next to this
module.
"""

from __future__ import annotations

import json
from pathlib import Path

FIXTURE_PATH = Path(__file__).with_name("fixtures.json")


def load(path=FIXTURE_PATH) -> dict:
    if not Path(path).exists():
        return {}
    return json.loads(Path(path).read_text())


def record(cfg=None) -> dict:
    """Re-run the default batteries and collect the recorded constants."""
    from dataclasses import replace

    from .harness import (FIXTURE_CONFIG, lp_scaling_report, lpft_instances, ratio_sequence,
                          run_eps_sweep, theorem1_battery, verify_lpft)
    from .problem import InstanceConfig

    config = FIXTURE_CONFIG
    template = InstanceConfig(seed=config.seed)
    thm1, _ = theorem1_battery(replace(template, eps=0.0), config.n_thm1_instances, cfg)
    lpft = verify_lpft(lpft_instances(template, config.n_instances), cfg)
    records = run_eps_sweep(template, config.eps_sweep, config.n_sweep_seeds, cfg)
    ratios = ratio_sequence(config.eps_sweep, [r.lp_l_ood for r in records],
                            [r.ft_l_ood_min for r in records], [r.eps for r in records])
    return {
        "thm1_min_ratio": thm1.quantities["min_ratio"],
        "thm1_pass_rate": thm1.quantities["pass_rate"],
        "lpft_ft_random_min_l_ood": lpft.quantities["min_ft_random_l_ood"],
        "thm2_eps": list(config.eps_sweep),
        "thm2_ratios": ratios,
        "lp_upper_slope": lp_scaling_report(records, config.eps_sweep).quantities["slope"],
    }


def main():
    data = record()
    FIXTURE_PATH.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    print(f"wrote {FIXTURE_PATH}")


if __name__ == "__main__":
    main()
