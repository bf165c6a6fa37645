import json

import numpy as np
import pytest

from hamur.data import make_batch
from hamur.experiment import load_splits, run
from hamur.model import HamurModel
from hamur.optim import Adam
from hamur.train import DivergenceError, train, train_step


def test_loss_decreases(small_cfg):
    tr, va, _ = load_splits(small_cfg)
    model = HamurModel(tr.spec, small_cfg.model)
    report = train(model, tr, va, small_cfg.train)
    assert report.losses[-1] < report.losses[0]
    assert 0 <= report.best_epoch < len(report.epochs)


def test_same_seed_same_losses(small_cfg):
    splits = load_splits(small_cfg)
    a, b = run(small_cfg, splits=splits), run(small_cfg, splits=splits)
    assert a.report.losses == b.report.losses
    c = run(small_cfg.replace(train={"seed": 7}), splits=splits)
    assert c.report.losses != a.report.losses


def test_best_epoch_is_restored(small_cfg):
    tr, va, _ = load_splits(small_cfg)
    cfg = small_cfg.replace(train={"max_epochs": 4, "patience": 4})
    res = run(cfg, splits=(tr, va, va))
    best = res.report.epochs[res.report.best_epoch]["valid"]["total"]
    assert res.test["total"]["auc"] == best["auc"]
    assert res.test["total"]["logloss"] == pytest.approx(best["logloss"], abs=1e-12)


def test_patience_stops_early(small_cfg):
    tr, va, _ = load_splits(small_cfg)
    cfg = small_cfg.replace(model={"use_adapter": False}, train={"lr": 1e-30, "max_epochs": 10, "patience": 2})
    report = train(HamurModel(tr.spec, cfg.model), tr, va, cfg.train)
    # updates of 1e-30 vanish below float64 resolution, so epoch 0 is never beaten
    assert report.best_epoch == 0 and len(report.epochs) == 3


def test_divergence_names_the_step(small_cfg):
    tr, _, _ = load_splits(small_cfg)
    model = HamurModel(tr.spec, small_cfg.model)
    opt = Adam(model.parameters())
    batch = make_batch(tr, np.arange(16))
    train_step(model, opt, batch)
    for p in model.backbone(1).parameters().values():
        p.data[...] = np.nan
    with pytest.raises(DivergenceError, match="step 2"):
        train_step(model, opt, batch)


def test_report_lines(small_cfg):
    res = run(small_cfg)
    lines = [json.loads(x) for x in res.report.to_lines().splitlines()]
    assert len(lines) == len(res.report.epochs) + 1
    assert lines[-1]["best_epoch"] == res.report.best_epoch
    assert set(lines[0]["valid"]) == {"1", "2", "3", "total"}
