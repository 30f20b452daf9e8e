"""
Training a small network against persistence
============================================

Fits a reduced network to a noisy daily cycle and compares its test error with
the "next bin equals this bin" baseline on the same chronological split. The
default architecture is much larger; this one trains in seconds.
"""

from datetime import datetime, timedelta

import numpy as np

from gapcast import model as M
from gapcast.baselines import persistence_at, rmse
from gapcast.config import ForecastConfig
from gapcast.experiment import split_region
from gapcast.series import GapSeries

rng = np.random.default_rng(0)
t = np.arange(300)
series = GapSeries("demo", datetime(2016, 3, 7), 10 * np.sin(2 * np.pi * t / 24) + rng.normal(0, 1, 300),
                   timedelta(hours=1))

cfg = ForecastConfig(w=12, L=1, channels=8, filter_size=(3, 3), head_widths=(32, 1), epochs=30,
                     learning_rate=3e-3, seed=0)
train_set, test_set, split = split_region(series, cfg)
print(split)

model = M.build(cfg)
print("parameters:", model.parameter_count())
M.train(model, train_set)
print("loss by epoch:", np.round(model.training_log, 3))

idx = np.array([s.target_index for s in test_set])
actual = series.values[idx]
print("network RMSE    :", rmse(actual, model.predict_samples(test_set)))
print("persistence RMSE:", rmse(actual, persistence_at(series, idx)))

# one-step forecast for the bin after the series ends
print("next bin:", series.end_time, M.predict(model, series))
