"""Run the Breast Cancer grid through the command-line runner.

The 12 presets cover AggVFL/SplitVFL x LR/MLP x three feature splits. The
runner writes one markdown table; epochs are cut to 50 here to keep the
demo short (the presets use 200).
"""
import sys
import tempfile
from pathlib import Path

from lea_vfl import cli
from lea_vfl.experiment import dump_config, list_presets, load_config

out = Path(tempfile.mkdtemp(prefix="lea-grid-"))
paths = []
for name in list_presets():
    if name.startswith("bc-"):
        p = out / f"{name}.cfg"
        p.write_text(dump_config(load_config(name, **{"train.epochs": 50})))
        paths.append(str(p))

code = cli.main(["run", *paths, "--reps", "2", "--out", str(out), "--format", "md"])
print(f"\nresults written to {out / 'results.md'}")
sys.exit(code)
