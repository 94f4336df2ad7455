import json

import numpy as np

from errors import ConfigInvalid, NonSimpleVertex, NotDelzant
from utils.export import emit_plot_data, plain, write_csv
from utils.hashing import report_hash, sha256_of


def test_error_payload_is_json_ready():
    error = ConfigInvalid("bad block", value=np.float64(1.5), nodes=np.arange(3), limit=np.inf)
    payload = error.to_dict()
    assert payload == {
        "code": "ConfigInvalid",
        "detail": "bad block",
        "context": {"value": 1.5, "nodes": [0, 1, 2], "limit": "inf"},
    }
    json.dumps(payload)
    assert error.exit_code == 1


def test_error_codes_follow_class_names():
    error = NonSimpleVertex("four facets meet", vertex=[0.0, 0.0])
    assert isinstance(error, NotDelzant)
    assert error.code == "NonSimpleVertex"


def test_plain_converts_nested_numpy():
    data = {1: (np.int64(2), np.array([[1.0, 2.0]])), "flag": np.bool_(True), "none": None}
    assert plain(data) == {"1": [2, [[1.0, 2.0]]], "flag": True, "none": None}


def test_write_csv_spreads_lists(tmp_path):
    path = write_csv([{"a": 1, "v": [0.5, 2.0]}, {"a": 2, "v": [1.5, -1.0], "extra": "x"}], tmp_path / "t.csv")
    assert path.read_bytes() == b"a,v_0,v_1,extra\r\n1,0.5,2.0,\r\n2,1.5,-1.0,x\r\n"


def test_emit_plot_data_skips_empty_tables(tmp_path):
    paths = emit_plot_data({"curve": [{"node": 0}], "empty": []}, tmp_path)
    assert [p.name for p in paths] == ["curve.csv"]


def test_hashes_ignore_key_order():
    assert sha256_of({"a": 1, "b": [1, 2]}) == sha256_of({"b": [1, 2], "a": 1})
    assert report_hash({"x": 1.0}, {}) != report_hash({"x": 1.0 + 1e-12}, {})
