"""
Ablations and cost
==================

Drive the experiment layer from Python: a small distance ablation written
to disk, and the per-epoch cost as the candidate count grows. The same
runs are available as ``srgcl ablate`` and ``srgcl bench-overhead``.
"""

# %%
import tempfile

from _common import DATA, mutag
from srgcl.experiments import AblationGrid, ExperimentSpec, bench_overhead, overhead_csv, run_ablation
from srgcl.trainer import TrainConfig

ds = mutag()
out = tempfile.mkdtemp(prefix="srgcl-demo-")
train = TrainConfig(epochs=2, eval_every=2, seed=0)
train.uppg.c = 10
spec = ExperimentSpec("MUTAG", str(DATA), train=train, folds=5, repeats=1, out=out)

# %%
# Distance ablation
# -----------------
rows, table = run_ablation(AblationGrid("distance", ["l2", "cos", "kl", "wd"], spec), dataset=ds)
print(table)

# %%
# Overhead against candidate count
# --------------------------------
# The reference row keeps exactly k views without any selection.
print(overhead_csv(bench_overhead(spec, [10, 30], epochs=1, dataset=ds)))
print("runs written under", out)
