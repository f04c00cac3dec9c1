"""Record the search residual floors under the default configuration.

Usage: python3 calibration/run_calibration.py [output.json]
"""
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from funkspray import __version__, catalog as cat
from funkspray.search import SearchConfig, search_funk

SPRAYS = ("flat", "sphere", "iso-deformed")


def calibrate(config: SearchConfig = SearchConfig(), n: int = 2) -> dict:
    out = {"version": __version__, "config": asdict(config), "n": n, "results": {}}
    for name in SPRAYS:
        t0 = time.perf_counter()
        res = search_funk(cat.spray(name, n), config, n)
        elapsed = time.perf_counter() - t0
        out["results"][name] = {k: v for k, v in res.to_dict().items() if k != "per_restart"}
        print(f"{name:>14}: val_rms={res.val_rms:.3e} status={res.status} ({elapsed:.1f} s)", file=sys.stderr)
    flat = out["results"]["flat"]["val_rms"]
    out["ratios_to_flat"] = {k: v["val_rms"] / flat for k, v in out["results"].items() if k != "flat"}
    return out


if __name__ == "__main__":
    target = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).with_name("search_calibration.json")
    target.write_text(json.dumps(calibrate(), indent=2) + "\n")
