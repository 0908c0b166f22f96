"""One-step known-optimum environment for sanity-checking the estimator.

The 'environment' is a bandit: a fixed observation, one action per episode,
reward equal to the negative L1 distance of the action from a known optimum.
Policy-gradient updates (N episodes per update, batch-mean baseline) must
drive the policy mean onto the optimum.
"""

import numpy as np

from chiprl.policy import (
    AdamState,
    InitScheme,
    MlpParameters,
    adam_update,
    forward,
    grad_log_prob,
    init,
    mean_action,
    sample_action_raw,
)

BANDIT_OPTIMUM = np.array([3.0, -2.0])
BANDIT_SIZES = (50, 32, 32, 4)


def run_bandit(seed, updates=2000, episodes_per_update=8, eta0=8e-4,
               half_every=350, init_variance=0.25, optimum=BANDIT_OPTIMUM):
    """Train on the bandit; returns the final policy mean action."""
    obs = np.full(BANDIT_SIZES[0], 0.5)
    params = init(InitScheme.xavier(1.0), seed, layer_sizes=BANDIT_SIZES)
    params.biases[-1][2:] = np.log(init_variance)
    adam = AdamState(params)
    rng = np.random.default_rng([seed, 7])
    for update in range(updates):
        eta = eta0 * 0.5 ** (update // half_every)
        out = forward(params, obs)
        actions = [sample_action_raw(out, rng) for _ in range(episodes_per_update)]
        rewards = np.array([-float(np.abs(a - optimum).sum()) for a in actions])
        advantages = rewards - rewards.mean()  # batch-mean baseline
        total_w = total_b = None
        for action, adv in zip(actions, advantages):
            grad = grad_log_prob(params, obs, action)
            scale = adv / episodes_per_update
            sw = [w * scale for w in grad.weights]
            sb = [b * scale for b in grad.biases]
            if total_w is None:
                total_w, total_b = sw, sb
            else:
                total_w = [x + y for x, y in zip(total_w, sw)]
                total_b = [x + y for x, y in zip(total_b, sb)]
        params = adam_update(params, MlpParameters(total_w, total_b), adam, eta)
    return mean_action(forward(params, obs))
