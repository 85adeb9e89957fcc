# %% [markdown]
# # Error shrinks with feeder size
#
# Larger feeders aggregate more customers, so individual mismatches average
# out. Fitting ``RMAE = a * demand**(-b)`` in log-log space gives a curve and
# a 99% band that can be used to anticipate the error on a new feeder.

# %%
import numpy as np

from lvbuddy.buddying import GAConfig, ga_buddy
from lvbuddy.evaluation import mean_demand, power_law_fit, rmae
from lvbuddy.model import aggregate_assignment
from lvbuddy.synthgen import ScenarioConfig, generate_network

net = generate_network(ScenarioConfig(seed=21, n_feeders=30, customers_min=2, customers_max=150,
                                      nondomestic_prob=0.0))
w = net.windows
train = net.pool.window(w.train_start, w.train_days)
test = net.pool.window(w.test_start, w.test_days)

x, y = [], []
for i, f in enumerate(net.feeders):
    actual = f.substation_series.window(w.test_start, w.test_days)
    a = ga_buddy(f, train, GAConfig(w=0.0, seed=i)).assignment
    x.append(mean_demand(actual))
    y.append(rmae(actual, aggregate_assignment(f, a, test)))

# %%
fit = power_law_fit(x, y)
print(f"RMAE = {fit.a:.4f} * demand^-{fit.b:.3f}   R2 {fit.r_squared:.3f}   "
      f"band x[{fit.lower_factor:.2f}, {fit.upper_factor:.2f}]   {fit.n_outside} of {fit.n} outside")
for d in np.geomspace(min(x), max(x), 5):
    lo, hi = fit.bounds(d)
    print(f"demand {d:7.3f} kWh/half-hour: expected RMAE {fit.predict(d):.4f} ({lo:.4f} to {hi:.4f})")
