"""Smoke test for the Python bindings.

Build the extension and put it on the path first, e.g.

    cargo build --release -p handover-py
    cp target/release/libhandover_py.so python/handover_py.so
    python3 python/smoke_test.py
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import handover_py as hp


def main():
    sessions = hp.simulate_study(sessions=6, participants=3, episodes=3, seed=4)
    assert len(sessions) == 6
    assert all(s.n_episodes == 3 for s in sessions)
    assert len(sessions[0].features()[0]) == 100

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "s.csv")
        sessions[0].save(path)
        back = hp.Session.load(path)
        assert len(back) == len(sessions[0]) and back.participant_id == sessions[0].participant_id

    cov = hp.ap_coverage(sessions)
    assert cov["coverage_fraction"] == 1.0, cov

    models = [hp.Classifier.train(k, sessions[:5], max_epochs=10, patience=5, seed=1) for k in hp.CLASSIFIER_KINDS]
    ep = models[0]
    assert ep.kind == "ep_start"
    p = ep.predict_proba([0.5] * 500)
    assert len(p) == 1 and 0.0 <= p[0] <= 1.0
    acc = ep.accuracy(sessions[5:])
    print(f"held-out ep_start accuracy {acc:.3f}")

    oracle = hp.closed_loop(None, sessions=2, episodes=2, seed=3)
    assert all(s["misses"] == 0 and s["deadlocks"] == 0 for s in oracle), oracle
    learned = hp.closed_loop(models, sessions=1, episodes=2, seed=3)
    print("learned closed loop:", learned[0]["matched"], "of", learned[0]["intents"], "intents matched")

    assert hp.gradient_check(seed=1, nets=3)["max_relative_error"] < 1e-4
    ab = hp.bayes_ab_poisson([3, 3], [1, 1], draws=50000, seed=1)
    assert abs(ab["p_a_gt_b"] - 0.910) < 0.01, ab
    an = hp.one_way_anova([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
    assert abs(an["f"] - 3.0) < 1e-9
    w = hp.wilcoxon_signed_rank([(1, 0), (0, 2), (3, 0), (0, 4), (5, 0)])
    assert w["v"] == 9.0

    try:
        hp.Classifier.train("sideways", sessions)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown kind accepted")
    print("python smoke test passed")


if __name__ == "__main__":
    main()
