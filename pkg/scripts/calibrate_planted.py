"""Expected separability of the planted-signal corpus, computed from the generator.

Prints, for the default planted configuration:
  * the expected user-level MI of every vocabulary emoji (population limit),
    so the margin between the weakest planted and strongest neutral emoji
    is visible before any corpus is drawn;
  * the expected popularity z statistic for the rate gap;
  * a Monte-Carlo accuracy of the Bayes classifier that knows the true
    preference vectors (an upper bound for any learned model).

    python scripts/calibrate_planted.py [--users 2000] [--sims 4000]
"""

import argparse
import math

import numpy as np

from emojilens.corpus import planted_config
from emojilens.lexicon import bundled_emoji_lexicon


def draws_pgf(cfg, s: float) -> float:
    """E[s^D] for the number D of preference draws in one message."""
    acc = 0.0
    for i, w in enumerate(cfg.emoji_count_weights):
        k = i + 1
        if k == 1:
            acc += w * s
        else:
            acc += w * (cfg.repeat_prob * s + (1 - cfg.repeat_prob) * s ** k)
    return acc


def p_use(cfg, rate: float, q: float) -> float:
    """Probability that a user draws an emoji of probability ``q`` at least once."""
    lo, hi = cfg.messages_per_user
    per_msg = (1 - rate) + rate * draws_pgf(cfg, 1 - q)
    return 1 - float(np.mean([per_msg ** n for n in range(lo, hi + 1)]))


def mi(pf: float, pm: float) -> float:
    """MI in nats between a use indicator and gender with equal class sizes."""
    out = 0.0
    for a, b in ((pf, pm), (1 - pf, 1 - pm)):
        joint_f, joint_m = a / 2, b / 2
        marg = joint_f + joint_m
        for j in (joint_f, joint_m):
            if j > 0:
                out += j * math.log(j / (marg * 0.5))
    return out


def expected_z(cfg) -> float:
    lo, hi = cfg.messages_per_user
    n = cfg.n_users_per_gender * (lo + hi) / 2
    p1, p2 = cfg.female_rate, cfg.male_rate
    p = (p1 + p2) / 2
    return (p1 - p2) / math.sqrt(p * (1 - p) * 2 / n)


def bayes_accuracy(cfg, sims: int, seed: int) -> float:
    rng = np.random.default_rng(seed)
    codes = sorted(set(cfg.female_preference) | set(cfg.male_preference))
    f = np.array([cfg.female_preference.get(c, 0.0) for c in codes])
    m = np.array([cfg.male_preference.get(c, 0.0) for c in codes])
    lo, hi = cfg.messages_per_user
    mean_k = sum((i + 1) * w for i, w in enumerate(cfg.emoji_count_weights))
    correct = 0
    for t in range(sims):
        male = t % 2 == 1
        pref, rate = (m, cfg.male_rate) if male else (f, cfg.female_rate)
        n = rng.integers(lo, hi + 1)
        n_emoji = rng.binomial(n, rate)
        # token counts: independent-draw approximation (repeats ignored)
        counts = rng.multinomial(int(round(n_emoji * mean_k)), pref)
        llr = counts @ (np.log(m) - np.log(f))
        llr += n_emoji * math.log(cfg.male_rate / cfg.female_rate)
        llr += (n - n_emoji) * math.log((1 - cfg.male_rate) / (1 - cfg.female_rate))
        correct += (llr > 0) == male
    return correct / sims


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=2000)
    ap.add_argument("--sims", type=int, default=4000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    cfg = planted_config(bundled_emoji_lexicon(), args.users, seed=args.seed)
    rows = []
    for code in sorted(cfg.female_preference):
        pf = p_use(cfg, cfg.female_rate, cfg.female_preference[code])
        pm = p_use(cfg, cfg.male_rate, cfg.male_preference[code])
        rows.append((mi(pf, pm), code, code in cfg.planted, pf, pm))
    rows.sort(reverse=True)
    planted = [r for r in rows if r[2]]
    neutral = [r for r in rows if not r[2]]
    print(f"{'MI':>10} {'code':>6} planted  p(use|F) p(use|M)")
    for r in rows[:25]:
        print(f"{r[0]:10.6f} {r[1]:>6} {str(r[2]):>7} {r[3]:8.4f} {r[4]:8.4f}")
    print(f"weakest planted MI   {min(r[0] for r in planted):.6f}")
    print(f"strongest neutral MI {max(r[0] for r in neutral):.6f}")
    # under independence 2n*MI ~ chi2(1) with n = 2 * users, so E[MI] = 1/(2n)
    print(f"null MI mean 1/(2n)   {1 / (4 * args.users):.6f}")
    print(f"expected popularity z {expected_z(cfg):.2f}")
    print(f"Bayes-oracle accuracy {bayes_accuracy(cfg, args.sims, args.seed):.3f} (baseline 0.5)")


if __name__ == "__main__":
    main()
