"""The command-line workflow end to end, in a scratch directory.

simulate -> fit -> predict -> evaluate -> sweep, each step reading the
files the previous one wrote.  The same commands work from a shell as
``patchwork-kriging <command> ...``.

Run: python demos/05_command_line_workflow.py
"""

# %%
import csv
import json
import pathlib
import tempfile

from patchwork_kriging.cli import main

work = pathlib.Path(tempfile.mkdtemp(prefix="pwk-demo-"))
data, model = work / "train.csv", work / "model.pwk"

# %%
main(["simulate", "--out", str(data), "--n", "3000", "--d", "2", "--kernel", "exp", "--seed", "1"])
main(["fit", "--data", str(data), "--out", str(model), "--b", "5", "--kernel", "exp", "--seed", "1"])
print("fit log:", json.loads((work / "model.pwk.log.json").read_text())["timings"])

# %%
(work / "new.csv").write_text("x1,x2\n2.5,2.5\n7.0,1.0\n")
main(["predict", "--model", str(model), "--data", str(work / "new.csv"), "--out", str(work / "pred.csv")])
print((work / "pred.csv").read_text())

# %% hold out 10% and score against the exact GP benchmark
main(["evaluate", "--data", str(data), "--split", "0.9", "--b", "5", "--kernel", "exp",
      "--seed", "2", "--out", str(work / "report.json")])
report = json.loads((work / "report.json").read_text())
print({k: round(v, 4) for k, v in report.items() if isinstance(v, float)})

# %% a small grid: one row per (K, B) cell
main(["sweep", "--out", str(work / "sweep.csv"), "--n", "1500", "--k", "8,16", "--b", "0,5", "--seed", "3"])
with open(work / "sweep.csv", newline="") as fh:
    for row in csv.DictReader(fh):
        print(row["K"], row["B"], row["i_mse"], row["msm"])
print("files in", work)
