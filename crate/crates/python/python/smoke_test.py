"""Quick end-to-end check of the compiled module."""

import json
import math

import psc


def main():
    data = psc.simulate_hdlss(50, 10, 40, 7)
    assert (data.n, data.d) == (50, 50), data
    assert sum(1 for y in data.labels if y == 1) == 10

    model = psc.fit_psc(data, gamma=0.5, c0=1.0)
    assert model.method == "psc"
    assert len(model.w) == 50
    assert math.isfinite(model.b)

    # a fresh draw as the test set
    test = psc.simulate_hdlss(50, 100, 400, 8)
    scores = model.decisions(test.rows())
    report = psc.evaluate(test.labels, scores)
    print(report)
    assert 0.0 <= report.bccr <= 1.0
    assert report.auc is not None

    again = psc.LinearModel.from_json(model.to_json())
    assert again.w == model.w and again.b == model.b

    svm = psc.fit_cssvm(data, c0=1.0)
    rmdd = psc.fit_rmdd(data)
    for m in (svm, rmdd):
        assert len(m.w) == 50

    assert abs(psc.beta(10, 40) - 4 ** -0.25) < 1e-15
    assert psc.bccr(1.0, 0.5) > 0

    folds = psc.stratified_kfold(data.labels, 5, 1)
    assert sorted(set(folds)) == [0, 1, 2, 3, 4]

    cfg = {
        "source": {"kind": "hdlss", "d": 20, "n_pos": 10, "n_neg": 20, "seed": 3},
        "repeats": 1,
        "outer_folds": 3,
        "inner_folds": 3,
        "gamma_grid": [0.5],
        "c0_grid": [1.0],
    }
    summary = json.loads(psc.cv_run(json.dumps(cfg)))
    assert summary["repeats"] == 1

    try:
        psc.Dataset([[1.0, 2.0], [3.0]], [1, -1])
    except ValueError:
        pass
    else:
        raise AssertionError("ragged rows accepted")

    print("smoke test ok")


if __name__ == "__main__":
    main()
