"""Regenerate the shipped demo configs from the presets module.

Run from the repo root:

    python3 scripts/make_demo_configs.py

Every file under src/maglogic/configs/ is derived; edit presets.py (or
this script) instead of the JSON.
"""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from maglogic import configio as cio  # noqa: E402
from maglogic import presets as pr  # noqa: E402

CONFIG_DIR = os.path.join(
    os.path.dirname(os.path.abspath(__file__)), "..", "src", "maglogic",
    "configs")


def out(name: str) -> str:
    return os.path.join(CONFIG_DIR, name)


def main() -> None:
    os.makedirs(CONFIG_DIR, exist_ok=True)

    cio.save_topology(
        out("demo_topology.json"), pr.demo_topology(), pr.demo_keys(),
        {
            "name": "three-unit selective demo",
            "scale": 1.0,
            "notes": "three orthogonally keyed units; one-hot at 20 mT",
            "calibration": {
                "mover_mass": "4.5e-4 kg, tuned for ~2 m/s ejection",
                "stator_remanence": "0.05 T, tuned for ~0.26 N peaks",
            },
        })

    cio.save_topology(
        out("degenerate_array.json"), pr.degenerate_array(), pr.demo_keys(),
        {
            "name": "degenerate parallel array",
            "notes": "stator-less parallel movers; friction swamps "
                     "mover-mover pull, so every key decodes to nothing",
        })

    lattice, template, keys, n_units = pr.pair_design_space()
    cio.write_atomic(
        out("pair_design_space.json"),
        cio.dumps_canonical(cio.design_to_doc(
            lattice, template, keys, n_units,
            metadata={
                "name": "two-site pair search",
                "notes": "exhaustive two-unit lattice; antiparallel "
                         "stator pairs pass, parallel pairs fail",
            })))

    machine = pr.mission_machine()
    cio.write_atomic(
        out("mission_machine.json"),
        cio.dumps_canonical(cio.machine_to_doc(machine, {
            "name": "four-unit mission machine",
            "notes": "two counters and two latches driving gated "
                     "cut/remove actions",
        })))
    cio.write_atomic(out("mission.prog"), pr.MISSION_PROGRAM)

    engine = pr.engine_machine()
    cio.write_atomic(
        out("engine_machine.json"),
        cio.dumps_canonical(cio.machine_to_doc(engine, {
            "name": "three-phase crank engine",
            "notes": "round-robin pulses rectified into shaft angle",
        })))
    cio.write_atomic(out("engine.prog"), pr.ENGINE_PROGRAM)

    campaign = cio.campaign_from_doc(pr.demo_campaign_doc())
    cio.write_atomic(
        out("demo_campaign.json"),
        cio.dumps_canonical(cio.campaign_to_doc(campaign)))

    print(f"wrote configs under {os.path.normpath(CONFIG_DIR)}")


if __name__ == "__main__":
    main()
