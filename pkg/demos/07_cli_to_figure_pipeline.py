"""End-to-end pipeline: experiment CLI -> result CSV -> deterministic figure.

Runs a small decay experiment through the CLI, then (if the frontend is
built) renders the log-log figure with its fitted-slope annotation.
"""

import json
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

from kpzlab.localfn import dump_driving_json, site_fn

root = Path(__file__).resolve().parent.parent
out = Path(tempfile.mkdtemp(prefix="kpzlab-demo-"))

config = {
    "kind": "bg-decay",
    "replicas": 30,
    "master_seed": 11,
    "parameters": {
        "driving": json.loads(dump_driving_json(site_fn(-1))),
        "N_list": [16, 32, 64],
        "horizon": 0.5,
    },
}
cfg_path = out / "bg_decay_config.json"
cfg_path.write_text(json.dumps(config, indent=2))

print(f"running: kpzlab bg-decay --config {cfg_path} --out {out}")
rc = subprocess.run(
    [sys.executable, "-m", "kpzlab.cli", "bg-decay", "--config", str(cfg_path), "--out", str(out)]
).returncode
print(f"exit code {rc}")
print((out / "bg_decay.csv").read_text())

cli_js = root / "frontend" / "dist" / "cli.js"
if cli_js.exists() and shutil.which("node"):
    fig_spec = {
        "kind": "decay",
        "inputs": [str(out / "bg_decay.csv")],
        "output": str(out / "bg_decay.svg"),
        "x": "N",
        "y": "mean_sup_upsilon_bg",
        "title": "Boltzmann-Gibbs functional decay",
    }
    spec_path = out / "figure.json"
    spec_path.write_text(json.dumps(fig_spec))
    rc = subprocess.run(["node", str(cli_js), "render", "--spec", str(spec_path)]).returncode
    print(f"figure render exit code {rc}: {out / 'bg_decay.svg'}")
else:
    print("frontend not built (cd frontend && npm install && npm run build); skipping figure")
