"""Smoke test for the pysparda extension module.

Build and install first:  pip install --no-build-isolation crates/python
"""

import json
import math
import sys

import pysparda


def check(condition, message):
    if not condition:
        sys.exit(f"FAIL: {message}")
    print(f"ok: {message}")


def vector_path():
    train, test = pysparda.simulate_vector(p=60, n_per_class=40, n_test=400, n_signal=5, seed=7)
    check(len(train) == 80 and len(test) == 400, "vector simulation sizes")

    model = pysparda.fit("dsda", train.x, train.y, nlambda=30)
    check(len(model) == 30, "dsda path has the requested length")
    check(model.df[0] == 0, "largest penalty selects nothing")

    errors = model.error_rates(test.x, test.y)
    check(min(errors) < 0.25, f"dsda minimal test error {min(errors):.3f}")

    preds = model.predict(test.x)
    check(set(preds[-1]) <= set(model.classes), "predictions use the training labels")

    again = pysparda.Model.from_json(model.to_json())
    check(again.predict(test.x) == preds, "json round trip predicts identically")

    road = pysparda.fit("road", train.x, train.y, nlambda=20)
    check(road.road_lambdas is not None and len(road.road_lambdas) == 20, "road reports constrained penalties")

    cv = pysparda.cross_validate("sos", train.x, train.y, nfolds=4, nlambda=20, seed=3)
    check(cv["chosen_lambda"] in cv["lambdas"], "cross-validation chooses a grid value")
    check(all(math.isnan(e) or 0.0 <= e <= 1.0 for e in cv["mean_error"]), "fold errors are rates")


def tensor_path():
    train, test = pysparda.simulate_tensor(dims=[4, 3, 2], n_per_class=40, n_test=200, seed=11)
    check(train.dims == [4, 3, 2] and len(train.covariates[0]) == 2, "tensor simulation shape")

    model = pysparda.fit("catch", train.x, train.y, dims=train.dims, covariates=train.covariates, nlambda=20)
    errors = model.error_rates(test.x, test.y, covariates=test.covariates)
    check(min(errors) < 0.35, f"catch minimal test error {min(errors):.3f}")
    check(len(model.coefficients(len(model) - 1)) == 24, "coefficient block has one row per cell")

    try:
        model.predict(test.x)
    except ValueError as err:
        check("covariates" in str(err), "missing covariates are rejected")
    else:
        sys.exit("FAIL: prediction without covariates should raise")


def multiclass_path():
    train, _ = pysparda.simulate_vector(p=20, n_per_class=30, n_test=10, n_signal=4, seed=5)
    x = [row for row in train.x]
    y = [label if i % 3 else 3 for i, label in enumerate(train.y)]
    model = pysparda.fit("msda", x, y, nlambda=15)
    check(len(model.classes) == 3, "three-class fit")
    try:
        pysparda.fit("dsda", x, y)
    except ValueError:
        print("ok: binary method rejects three classes")
    else:
        sys.exit("FAIL: binary method accepted three classes")


if __name__ == "__main__":
    print(json.dumps({"version": pysparda.__version__, "methods": pysparda.METHODS}))
    vector_path()
    tensor_path()
    multiclass_path()
    print("all checks passed")
