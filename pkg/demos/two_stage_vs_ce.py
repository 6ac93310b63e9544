"""Two-stage training next to plain cross-entropy on the same noisy clusters.

Prints the stage-1 wrong-event separation, the base epoch picked from the
label wave, the clean-selection quality of tau1 and both test accuracies.
Pass ``--full`` for the desk-scale setup (4000 samples, 30+30 epochs).

    python demos/two_stage_vs_ce.py [--full]
"""

import sys
from pathlib import Path

from wrongevent import load_config, resolve_config
from wrongevent.config import train_config
from wrongevent.evaluation import prf_at_threshold
from wrongevent.experiment import load_data
from wrongevent.trainer import run_two_stage, train_ce_baseline

full = "--full" in sys.argv
cfg = resolve_config() if full else load_config(Path(__file__).with_name("smoke.json"))
train, test = load_data(cfg)
tc = train_config(cfg)
print(f"{len(train)} training samples, observed noise rate {train.noise_rate:.3f}")

model, ledger, rep = run_two_stage(tc, train, test)
print("\nepoch stage  loss    test   wave  auc(we) auc(loss)")
for m in rep.metrics:
    wave = "-" if m.label_wave is None else m.label_wave
    print(f"{m.epoch:5d} {m.stage:5d}  {m.train_loss:.4f}  {m.test_acc:.4f} {wave!s:>5}  {m.auc_we:.4f}  {m.auc_loss:.4f}")
print(f"\nbase model from epoch {rep.base_epoch}")
for t in cfg["eval"]["thresholds"]:
    p, r, f = prf_at_threshold(rep.weights.tau1, train.noise_mask, t)
    print(f"tau1 >= {t}: precision {p:.4f} recall {r:.4f} F {f:.4f}")

_, _, ce = train_ce_baseline(tc, train, test)
print(f"\ntest accuracy  two-stage {rep.final_test_acc:.4f}   plain CE {ce.final_test_acc:.4f}")
