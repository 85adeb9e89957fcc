# %% [markdown]
# # Confidence bands for feeder demand
#
# Two ways to put an 80% band around a feeder's half-hourly demand: resampling
# monitored profiles by class (bootstrap), and per-half-hour linear quantile
# regression on the measured substation series. Bands are scored with a
# normalised two-quantile pinball loss.

# %%
import numpy as np

from lvbuddy.evaluation import normalized_crps
from lvbuddy.synthgen import ScenarioConfig, generate_network
from lvbuddy.uncertainty import BootstrapConfig, bootstrap_bands, qr_bands

net = generate_network(ScenarioConfig(seed=5, n_feeders=6, nondomestic_prob=0.2))
w = net.windows
test = net.pool.window(w.test_start, w.test_days)

# %% Score each method on each feeder
rows = []
for i, f in enumerate(net.feeders):
    actual = f.substation_series.window(w.test_start, w.test_days)
    hist = f.substation_series.window(w.qr_train_start, w.qr_train_days)
    qr, _, _ = qr_bands(hist, w.test_start, w.test_days, origin=w.start_date)
    uni = bootstrap_bands(f, test, BootstrapConfig(scaling="uniform", seed=i))
    gau = bootstrap_bands(f, test, BootstrapConfig(scaling="gaussian", seed=i))
    rows.append([normalized_crps(actual, b) for b in (qr, uni, gau)])
    inside = np.mean((actual.values >= qr.lower.values) & (actual.values <= qr.upper.values))
    print(f"{f.id}: M={f.M:3d}  nCRPS qr {rows[-1][0]:.4f}  uniform {rows[-1][1]:.4f}  "
          f"gaussian {rows[-1][2]:.4f}  QR coverage {inside:.0%}")
print("mean", np.round(np.mean(rows, axis=0), 4))

# %% One day of bands next to the measured demand
f = net.feeders[0]
actual = f.substation_series.window(w.test_start, 1).values
qr, _, _ = qr_bands(f.substation_series.window(w.qr_train_start, w.qr_train_days), w.test_start, 1,
                    origin=w.start_date)
for slot in range(0, 48, 6):
    lo, hi, y = qr.lower.values[slot], qr.upper.values[slot], actual[slot]
    flag = "" if lo <= y <= hi else "  outside"
    print(f"{slot // 2:02d}:{30 * (slot % 2):02d}  band [{lo:6.2f}, {hi:6.2f}]  actual {y:6.2f}{flag}")
