"""FedTruth against one boosted update.

Five honest clients send noisy copies of the same update; a sixth sends the
honest update scaled by 10. Plain averaging is dragged toward the outlier,
FedTruth is not.
"""
import numpy as np

from freca.aggregation import fedavg, fedtruth
from freca.params import ModelUpdate

rng = np.random.default_rng(0)
true_update = rng.standard_normal(50)

updates = [ModelUpdate(k, true_update + 0.2 * rng.standard_normal(50), 100) for k in range(5)]
updates.append(ModelUpdate(5, 10.0 * updates[0].delta, 100))

avg, _ = fedavg(updates)
res = fedtruth(updates)

print("error of FedAvg   :", round(float(np.linalg.norm(avg - true_update)), 3))
print("error of FedTruth :", round(float(np.linalg.norm(res.truth - true_update)), 3))
print("iterations        :", res.iterations, "(converged)" if res.converged else "(hit max_iter)")

# aggregation weights; the boosted client ends up with almost none
for u, w in zip(updates, res.weights):
    print(f"client {u.client_id}: weight {w:.4f}")

# objective per iteration never goes up
print("objective trace:", [round(x, 2) for x in res.objective_trace[:6]], "...")
