"""Smoke test for the fsemt_py extension module."""

import json

import fsemt_py as fm


def main():
    data, planted = fm.generate_synthetic(60, 80, 5, 3, 2.0, seed=3)
    assert data.n_samples == 60 and data.n_features == 80 and len(planted) == 5
    data = fm.minmax_scale(data)

    assert fm.discretize([1.0, 2.0, 3.0, 4.0], 2) == [0, 0, 1, 1]
    assert abs(fm.symmetric_uncertainty([0, 0, 1, 1], [0, 0, 1, 1]) - 1.0) < 1e-12

    kept, threshold, su = fm.remove_irrelevant(data)
    assert len(su) == 80 and len(kept) >= 2
    assert all(su[j] > threshold for j in kept)

    relief = fm.relieff_scores(data)
    chi = fm.chi_square_scores(data)
    assert len(relief) == len(chi) == 80 and min(chi) >= 0.0
    assert sum(fm.knee_point_mask([10.0, 9.0, 2.0, 1.0, 0.5])) == 3

    assert fm.nd_sort([(0.1, 0.3), (0.3, 0.1), (0.2, 0.4)]) == [0, 0, 1]
    prime = [0.8, 0.4, 0.6]
    assert fm.wo_reduce(prime, prime, [0, 0, 1]) == [1.0, 1.0]
    assert fm.wo_expand([1.0, 1.0], prime, [0, 0, 1]) == prime
    assert len(fm.cluster_features(data)) == 80

    solution = [1.0 if j in planted else 0.0 for j in range(80)]
    error, rate, _ = fm.evaluate(data, solution)
    assert rate == 5 / 80 and error < 0.2

    config = json.loads(fm.default_config())
    assert config["theta"] == 0.6 and config["rtp"] == 0.6
    report = json.loads(fm.run_experiment(data, json.dumps({"outer_folds": 2, "max_iter": 5, "seed": 1})))
    assert len(report["folds"]) == 2
    print("summary", report["summary"])

    try:
        fm.load_csv("/nonexistent/file.csv")
    except OSError as exc:
        assert "nonexistent" in str(exc)
    else:
        raise AssertionError("missing file accepted")
    print("smoke test passed")


if __name__ == "__main__":
    main()
