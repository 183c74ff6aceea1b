"""
Training and evaluating at desk scale
=====================================

Generate a small synthetic dataset with one garment family held out, fit
normalization statistics, train the attention model and the stitch
classifier on its predictions, then score both test splits. The sizes
here finish in a few minutes on one core; the `desk` preset and the CLI
run the same steps at full desk scale.
"""
import tempfile
from pathlib import Path

import numpy as np

from sewrecon.dataio import GarmentDataset, prepare_dataset
from sewrecon.pipeline import EvalOptions, evaluate, format_table, noise_sweep, write_svg, ShapePredictor
from sewrecon.synthetic import SyntheticSpec, generate_synthetic_dataset, write_dataset
from sewrecon.training import load_config, train_shape, train_stitch

work = Path(tempfile.mkdtemp(prefix="sewrecon-demo-"))
data = work / "data"

# dresses never appear in training
spec = SyntheticSpec({"skirt": 40, "top": 40, "tee": 40, "dress": 10}, unseen=["dress"], n_val=4, n_test=4)
write_dataset(data, *generate_synthetic_dataset(spec, np.random.default_rng(0)))
prepare_dataset(data, n_points=500)
ds = GarmentDataset(data)
print({k: len(v) for k, v in ds.split.to_dict().items() if k != "unseen_types"})

config = load_config(preset="desk", overrides={"data_root": str(data), "epochs": 60, "batch_size": 4, "stitch_epochs": 20})
shape = train_shape(config, work / "shape", ds)
stitch = train_stitch(config, shape, work / "stitch", ds)

report = evaluate(shape, ds, stitch)
print(format_table(report))

# the same test clouds with holes punched in them
print(format_table(evaluate(shape, ds, stitch, EvalOptions(scan=True))))

# gaussian noise on the input points
sweep = noise_sweep(shape, ds, sigmas=(0.0, 0.5, 1.0))
for row in sweep["table"]:
    print(row["sigma"], round(row["test_seen"]["panel_l2"], 2), round(row["test_unseen"]["panel_l2"], 2))

# predicted (solid) against ground truth (dashed) for one unseen dress
sid = ds.split.test_unseen[0]
pred = ShapePredictor.from_checkpoint(shape).predict_ids(ds, [sid])[0]
write_svg(pred, ds.pattern(sid), work / f"{sid}.svg")
print("wrote", work / f"{sid}.svg")
