#!/usr/bin/env python3
"""Regenerate the shipped scene corpus under scenes/.

The corpus is fully determined by the canonical seeds in fluxmap.corpus;
this script rewrites the JSON files and the digest manifest. Run it after
changing the corpus generators and commit the result.
"""

import hashlib
import json
from pathlib import Path

from fluxmap.corpus import CANONICAL_SEED, calibration_pairs
from fluxmap.harness import canonical_scenario, spec_to_dict
from fluxmap.scene import scene_to_dict

OUT = Path(__file__).resolve().parent.parent / "scenes"

CALIBRATION_OPTS = {"r_reuse": 0.98, "T": 100, "trials": 12, "master_seed": 1, "factor": 2}


def write(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2) + "\n")


def main() -> None:
    OUT.mkdir(exist_ok=True)
    files = {}

    for kind in ("bs_move", "static_to_dynamic", "env_change"):
        spec = canonical_scenario(kind)
        files[f"scenario_{kind}.json"] = spec_to_dict(spec)
    files["scenario_bs_move_flux.json"] = spec_to_dict(
        canonical_scenario("bs_move", mode="flux")
    )

    pairs = calibration_pairs(CANONICAL_SEED, count=20)
    files["calibration_pairs.json"] = {
        "pairs": [
            {"initial": scene_to_dict(a), "target": scene_to_dict(b)} for a, b in pairs
        ],
        **CALIBRATION_OPTS,
    }

    single = canonical_scenario("bs_move").scene_initial
    files["scene_canonical.json"] = scene_to_dict(single)

    digests = {}
    for name, payload in sorted(files.items()):
        write(OUT / name, payload)
        digests[name] = hashlib.sha256((OUT / name).read_bytes()).hexdigest()
    write(OUT / "digests.json", digests)
    print(f"wrote {len(files)} corpus files + digests.json to {OUT}")


if __name__ == "__main__":
    main()
