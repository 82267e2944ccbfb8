"""The end-to-end experiment harness, miniaturized.

One frozen config object drives six stages: forward training, feedback
training, coefficient search per noise condition, unrolled evaluation,
attack sweeps, and report rendering. Every stage writes its artifacts into
out_dir and later stages read them back, so stages can also be run one at a
time (that is what the command line wraps).

Artifacts: weight snapshots (.pcw), metrics.csv, hp_results.json,
attack.json/.csv, relative_hp.csv, SVG charts. Byte-identical reruns are
part of the contract: the config hash in each CSV header pins what
produced it.
"""

import json
import pathlib
import tempfile

from pcdyn.harness import (
    AttackSection,
    DataSection,
    EvalSection,
    ExperimentConfig,
    FbSection,
    FfSection,
    HpSection,
    ModelSection,
    NoiseSection,
    config_hash,
    run_experiment,
)

out = pathlib.Path(tempfile.mkdtemp(prefix="pcdyn_demo_"))
config = ExperimentConfig(
    experiment="mini",
    seed=0,
    out_dir=str(out),
    data=DataSection(train_images=48, val_images=24),
    model=ModelSection(baselines=("same",)),
    train_ff=FfSection(epochs=2, batch_size=16),
    train_fb=FbSection(epochs=2, batch_size=16),
    train_hp=HpSection(epochs=1, batch_size=24, timesteps=2, restarts=2),
    noise=NoiseSection(kinds=("gaussian",)),
    eval=EvalSection(timesteps=2),
    attack=AttackSection(epsilons=(0.05, 0.15, 0.4), steps=12, timesteps=1,
                         min_images=1, max_images=4),
)
print(f"config hash: {config_hash(config)}")

outputs = run_experiment(config)  # all six stages
print("\nartifacts written:")
for path in outputs["written"]:
    print(f"  {pathlib.Path(path).name}")

metrics = (out / "metrics.csv").read_text().splitlines()
print(f"\nmetrics.csv: {len(metrics) - 2} rows; first three:")
for line in metrics[:5]:
    print(f"  {line}")

attack = json.loads((out / "attack.json").read_text())
print(f"\nattack medians (inf = never succeeded within the grid):")
for name, res in sorted(attack["results"].items()):
    print(f"  {name:<10} median={res['median']}")
hp = json.loads((out / "hp_results.json").read_text())
conds = sorted(hp["conditions"])
print(f"hp conditions: {conds}")
best = hp["conditions"]["clean"]["hyperparams"][0]
print(f"clean best coefficients (pcoder 1): "
      f"mu={best[0]:.3f} gamma={best[1]:.3f} beta={best[2]:.3f} alpha={best[3]:.4f}")
print(f"\nthe CLI equivalent: pcdyn train-ff --config cfg.json, then train-fb,"
      f" train-hp, eval, attack, report")
