import json
import struct

import numpy as np
import pytest

from zonalrad.core import FEATURE_NAMES, FEATURE_SCHEMA_HASH, SchemaError, Zone, read_feature_csv
from zonalrad.models import (EntropyRandomForest, L1LogisticRegression, NewtonBoostingClassifier,
                             RBFSupportVectorClassifier)
from zonalrad.net import NetConfig, train_net
from zonalrad.persist import (MAGIC, load_model, load_standardizer, read_header, save_model,
                              save_standardizer)
from zonalrad.standardize import fit_standardizer

MAKERS = {
    "logreg_l1": lambda: L1LogisticRegression(lam=0.02),
    "svm_rbf": lambda: RBFSupportVectorClassifier(),
    "random_forest": lambda: EntropyRandomForest(n_estimators=15, random_state=2),
    "gbt": lambda: NewtonBoostingClassifier(20, max_depth=3, subsample=0.7, colsample_bytree=0.6),
}


def fitted(kind, rng):
    X = rng.normal(size=(60, 26))
    y = (X[:, 2] + rng.normal(size=60) > 0).astype(int)
    m = MAKERS[kind]().fit(X, y)
    m.zone_ = Zone.TZ
    return m


@pytest.mark.parametrize("kind", list(MAKERS))
def test_round_trip(kind, rng, tmp_path):
    model = fitted(kind, rng)
    save_model(model, tmp_path / "m.zldc", seed=17)
    back = load_model(tmp_path / "m.zldc")
    rows = rng.normal(size=(100, 26))
    assert np.array_equal(model.positive_proba(rows), back.positive_proba(rows))
    assert back.kind == kind and back.zone_ is Zone.TZ
    header = read_header(tmp_path / "m.zldc")
    meta = header["metadata"]
    assert header["kind"] == kind and header["version"] == 1
    assert meta["zone"] == "TZ" and meta["seed"] == 17
    assert meta["feature_schema"] == FEATURE_SCHEMA_HASH
    params = {k: v for k, v in model.get_params().items() if k != "n_jobs"}
    assert meta["hyperparameters"] == json.loads(json.dumps(params))


@pytest.mark.parametrize("kind", list(MAKERS))
def test_byte_reproducible(kind, tmp_path):
    for name in ("a", "b"):
        save_model(fitted(kind, np.random.default_rng(0)), tmp_path / name)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_network_round_trip(rng, tmp_path):
    x = rng.normal(100, 10, size=(12, 16, 16))
    net = train_net(x, np.arange(12) % 2, NetConfig(epochs=2, batch_size=4, seed=3)).net
    net.zone_ = Zone.AS
    save_model(net, tmp_path / "cnn.zldc")
    back = load_model(tmp_path / "cnn.zldc")
    probe = rng.normal(100, 10, size=(100, 16, 16))
    assert np.array_equal(net.positive_proba(probe), back.positive_proba(probe))
    assert back.step == net.step and back.zone_ is Zone.AS
    for k in net.parameters():
        assert np.array_equal(net.m[k], back.m[k]) and np.array_equal(net.v[k], back.v[k])
    assert read_header(tmp_path / "cnn.zldc")["kind"] == "cnn"


def test_bad_magic(rng, tmp_path):
    save_model(fitted("logreg_l1", rng), tmp_path / "m")
    raw = bytearray((tmp_path / "m").read_bytes())
    raw[0:5] = b"XXXXX"
    (tmp_path / "m").write_bytes(bytes(raw))
    with pytest.raises(SchemaError, match="magic"):
        load_model(tmp_path / "m")


def rewrite_header(path, edit):
    raw = path.read_bytes()
    (n,) = struct.unpack("<I", raw[5:9])
    header = json.loads(raw[9:9 + n])
    edit(header)
    head = json.dumps(header).encode()
    path.write_bytes(MAGIC + struct.pack("<I", len(head)) + head + raw[9 + n:])


def test_unknown_version(rng, tmp_path):
    save_model(fitted("gbt", rng), tmp_path / "m")
    rewrite_header(tmp_path / "m", lambda h: h.update(version=2))
    with pytest.raises(SchemaError, match="version"):
        load_model(tmp_path / "m")


def test_schema_hash_mismatch(rng, tmp_path):
    save_model(fitted("gbt", rng), tmp_path / "m")
    rewrite_header(tmp_path / "m", lambda h: h["metadata"].update(feature_schema="0" * 16))
    with pytest.raises(SchemaError, match="schema"):
        load_model(tmp_path / "m")


def test_unknown_kind(rng, tmp_path):
    save_model(fitted("gbt", rng), tmp_path / "m")
    rewrite_header(tmp_path / "m", lambda h: h.update(kind="knn"))
    with pytest.raises(SchemaError):
        load_model(tmp_path / "m")


def test_narrow_csv_rejected(rng, tmp_path):
    model = fitted("random_forest", rng)
    save_model(model, tmp_path / "m")
    back = load_model(tmp_path / "m")
    cols = list(FEATURE_NAMES[:25]) + ["sample_id", "zone", "label"]
    (tmp_path / "f.csv").write_text(",".join(cols) + "\n" + ",".join(["0.5"] * 25) + ",x,TZ,1\n")
    with pytest.raises(SchemaError):
        read_feature_csv(tmp_path / "f.csv")
    with pytest.raises(SchemaError):
        back.positive_proba(np.zeros((1, 25)))


def test_standardizer_record(rng, tmp_path):
    model = fit_standardizer([rng.normal(size=(20, 20)) for _ in range(3)])
    save_standardizer(model, tmp_path / "s.json")
    back = load_standardizer(tmp_path / "s.json")
    assert np.array_equal(back.mean_landmarks, model.mean_landmarks)
    assert back.config == model.config
    assert json.loads((tmp_path / "s.json").read_text())["format"] == "standardizer.v1"
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(SchemaError):
        load_standardizer(tmp_path / "bad.json")
