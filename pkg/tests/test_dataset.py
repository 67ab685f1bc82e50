import hashlib
import json
import struct
import zlib

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from senres.dataset import (
    WINDOWING,
    CsvSchema,
    Recording,
    SplitSpec,
    WindowSet,
    dumps_swnd,
    load_csv_recordings,
    load_ucihar,
    loads_swnd,
    read_swnd,
    segment,
    split,
    synthetic_sinusoids,
    window_starts,
    write_swnd,
)
from senres.errors import FormatError, InvalidParamsError, ParseError, SchemaError


def _set(n=12, t=16, c=6, k=3, seed=0, subjects=True):
    rng = np.random.default_rng(seed)
    return WindowSet(rng.standard_normal((n, t, c)), np.arange(n) % k, [f"c{i}" for i in range(k)],
                     {"dataset": "unit"}, np.arange(n) // 2 if subjects else None)


class TestSegment:
    def test_motionsense_offsets(self):
        rec = Recording(1, 0, np.arange(1000.0))
        assert window_starts(1000, 200, 0.125) == [0, 175, 350, 525, 700]
        assert len(segment(rec, 200, 0.125)) == 5

    @pytest.mark.parametrize("overlap", [0.0, 0.5, 0.9])
    def test_exact_fit(self, overlap):
        assert len(segment(Recording(1, 0, np.zeros((128, 6))), 128, overlap)) == 1

    @pytest.mark.parametrize("name,step", [("ucihar", 64), ("motionsense", 175), ("uschad", 150)])
    def test_paper_steps(self, name, step):
        w, o = WINDOWING[name]
        starts = window_starts(10 * w, w, o)
        assert starts[1] - starts[0] == step

    def test_short_stream_gives_no_windows(self):
        ws = segment(Recording(1, 0, np.zeros((50, 6))), 128, 0.5)
        assert len(ws) == 0 and ws.data.shape == (0, 128, 6)

    @pytest.mark.parametrize("overlap", [-0.1, 1.0, 1.5])
    def test_bad_overlap(self, overlap):
        with pytest.raises(InvalidParamsError):
            segment(Recording(1, 0, np.zeros((300, 6))), 128, overlap)

    def test_label_and_subject_inherited(self):
        ws = segment(Recording(7, 2, np.zeros((400, 6))), 128, 0.5, ["a", "b", "c"])
        assert set(ws.labels) == {2} and set(ws.subjects) == {7}

    @given(st.integers(2, 400), st.integers(2, 64), st.floats(0.0, 0.95))
    @settings(max_examples=150, deadline=None)
    def test_windows_are_source_slices(self, length, window_len, overlap):
        assume(round(window_len * (1 - overlap)) >= 1)
        x = np.arange(length * 2, dtype=float).reshape(length, 2)
        ws = segment(Recording(0, 0, x), window_len, overlap)
        starts = window_starts(length, window_len, overlap)
        assert len(ws) == len(starts)
        for s, w in zip(starts, ws.data):
            assert s + window_len <= length
            np.testing.assert_array_equal(w, x[s:s + window_len])


class TestUciHar:
    def test_fixture_round_trip(self, ucihar_dir):
        root, arrays = ucihar_dir
        ws = load_ucihar(root)
        assert ws.data.shape == (5, 128, 6)
        np.testing.assert_array_equal(ws.data[:3], arrays["train"][0].astype(np.float32))
        np.testing.assert_array_equal(ws.labels[:3] + 1, arrays["train"][1])
        assert ws.num_classes == 6 and ws.subjects is not None

    def test_two_line_file(self, tmp_path):
        from conftest import write_ucihar
        arrays = write_ucihar(tmp_path, (2, 0))
        ws = load_ucihar(tmp_path, partitions=("train",))
        assert len(ws) == 2
        np.testing.assert_array_equal(ws.data, arrays["train"][0].astype(np.float32))

    def test_label_out_of_range(self, ucihar_dir):
        root, _ = ucihar_dir
        (root / "train" / "y_train.txt").write_text("1\n7\n2\n")
        with pytest.raises(ParseError) as e:
            load_ucihar(root)
        assert e.value.line == 2 and e.value.path.endswith("y_train.txt")

    def test_ragged_line(self, ucihar_dir):
        root, _ = ucihar_dir
        path = root / "test" / "Inertial Signals" / "body_gyro_y_test.txt"
        lines = path.read_text().splitlines()
        lines[1] = " ".join(lines[1].split()[:-1])
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as e:
            load_ucihar(root)
        assert e.value.line == 2 and "body_gyro_y_test.txt:2:" in str(e.value)

    def test_non_numeric(self, ucihar_dir):
        root, _ = ucihar_dir
        path = root / "train" / "Inertial Signals" / "total_acc_x_train.txt"
        lines = path.read_text().splitlines()
        lines[2] = lines[2].replace(lines[2].split()[5], "abc", 1)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as e:
            load_ucihar(root)
        assert e.value.line == 3

    def test_missing_label_file(self, ucihar_dir):
        root, _ = ucihar_dir
        (root / "train" / "y_train.txt").unlink()
        with pytest.raises(ParseError):
            load_ucihar(root)

    def test_count_mismatch(self, ucihar_dir):
        root, _ = ucihar_dir
        (root / "train" / "y_train.txt").write_text("1\n2\n")
        with pytest.raises(ParseError):
            load_ucihar(root)


def _write_csv(path, rows, header="t,ax,ay,az,gx,gy,gz,who,act"):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(header + "\n" + "\n".join(",".join(str(v) for v in r) for r in rows) + "\n")


SCHEMA = {
    "channels": {"ax": "acc_x", "ay": "acc_y", "az": "acc_z", "gx": "gyro_x", "gy": "gyro_y", "gz": "gyro_z"},
    "subject_column": "who",
    "activity_column": "act",
    "classes": ["walk", "sit"],
    "sample_rate_hz": 50,
}


class TestCsv:
    def test_three_rows(self, tmp_path):
        rows = [[i, i, 2 * i, 3 * i, -i, 0, 1, 4, "sit"] for i in range(3)]
        _write_csv(tmp_path / "a.csv", rows)
        (rec,) = load_csv_recordings(tmp_path, SCHEMA)
        assert rec.data.shape == (3, 6) and rec.subject == 4 and rec.label == 1
        np.testing.assert_array_equal(rec.data[:, 1], [0, 2, 4])

    def test_schema_file_and_path_pattern(self, tmp_path):
        schema = {"channels": SCHEMA["channels"], "path_pattern": r"(?P<activity>[a-z]+)_\d+/sub_(?P<subject>\d+)\.csv"}
        (tmp_path / "schema.json").write_text(json.dumps(schema))
        data = tmp_path / "data"
        _write_csv(data / "wlk_7" / "sub_3.csv", [[0, 1, 1, 1, 1, 1, 1, 0, 0]] * 4)
        _write_csv(data / "jog_9" / "sub_12.csv", [[0, 2, 2, 2, 2, 2, 2, 0, 0]] * 5)
        recs = load_csv_recordings(data, tmp_path / "schema.json")
        assert [(r.activity, r.subject, r.length) for r in recs] == [("jog", 12, 5), ("wlk", 3, 4)]
        assert [r.label for r in recs] == [0, 1]

    def test_missing_column(self, tmp_path):
        _write_csv(tmp_path / "a.csv", [[0, 1, 2, 3, 4, 5, 1, "walk"]], header="t,ax,ay,az,gx,gy,who,act")
        with pytest.raises(SchemaError):
            load_csv_recordings(tmp_path, SCHEMA)

    def test_non_numeric_cell(self, tmp_path):
        _write_csv(tmp_path / "a.csv", [[0, 1, 2, 3, 4, 5, 6, 1, "walk"], [1, 1, "x", 3, 4, 5, 6, 1, "walk"]])
        with pytest.raises(ParseError) as e:
            load_csv_recordings(tmp_path, SCHEMA)
        assert e.value.line == 3

    def test_incomplete_channel_mapping(self):
        with pytest.raises(SchemaError):
            CsvSchema.from_dict({"channels": {"ax": "acc_x"}, "activity_column": "act"})

    def test_segmentation_preset(self, tmp_path):
        rows = [[i, i, 0, 0, 0, 0, 0, 1, "walk"] for i in range(1000)]
        _write_csv(tmp_path / "a.csv", rows)
        (rec,) = load_csv_recordings(tmp_path, SCHEMA)
        ws = segment(rec, *WINDOWING["motionsense"], class_names=SCHEMA["classes"])
        assert len(ws) == 5
        np.testing.assert_array_equal(ws.data[:, 0, 0], [0, 175, 350, 525, 700])


class TestSplit:
    def test_partition(self):
        ws = _set(n=100, k=4)
        train, test = split(ws, SplitSpec(0.6, seed=3))
        assert len(train) == 60 and len(test) == 40
        a = {r.tobytes() for r in train.data}
        b = {r.tobytes() for r in test.data}
        assert not a & b and len(a | b) == 100

    def test_deterministic(self):
        ws = _set(n=50)
        a, _ = split(ws, SplitSpec(0.3, seed=9))
        b, _ = split(ws, SplitSpec(0.3, seed=9))
        c, _ = split(ws, SplitSpec(0.3, seed=10))
        assert a == b and a != c

    def test_stratified_one_percent(self):
        ws = synthetic_sinusoids(per_class=600, num_classes=6, length=8, channels=1)
        train, test = split(ws, SplitSpec(0.01, seed=0))
        assert list(train.class_counts()) == [6] * 6
        assert len(test) == 3600 - 36

    def test_fallback_is_recorded(self):
        ws = _set(n=12, k=3)
        with pytest.warns(UserWarning):
            train, test = split(ws, SplitSpec(0.01, seed=0))
        assert len(train) == 1 and len(test) == 11
        assert train.provenance["split"]["warnings"]

    def test_by_subject(self):
        ws = _set(n=40)
        train, test = split(ws, SplitSpec(0.5, seed=1, by_subject=True))
        assert not set(train.subjects) & set(test.subjects)
        assert len(train) + len(test) == 40

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.5])
    def test_bad_fraction(self, fraction):
        with pytest.raises(InvalidParamsError):
            SplitSpec(fraction)

    @given(st.integers(2, 300), st.floats(0.01, 0.99), st.integers(0, 2 ** 32 - 1), st.booleans())
    @settings(max_examples=80, deadline=None)
    def test_partition_property(self, n, fraction, seed, stratified):
        ws = WindowSet(np.zeros((n, 2, 1)), np.arange(n) % 3, ["a", "b", "c"])
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            train, test = split(ws, SplitSpec(fraction, seed, stratified))
        assert len(train) + len(test) == n and len(train) >= 1 and len(test) >= 1


class TestSwnd:
    def test_round_trip(self, tmp_path):
        ws = _set()
        write_swnd(ws, tmp_path / "w.swnd")
        back = read_swnd(tmp_path / "w.swnd")
        assert back == ws
        assert dumps_swnd(back) == dumps_swnd(ws)

    def test_without_subjects(self):
        ws = _set(subjects=False)
        back = loads_swnd(dumps_swnd(ws))
        assert back == ws and back.subjects is None

    def test_header_layout(self):
        ws = _set(n=2, t=4, c=3, k=2, subjects=False)
        blob = dumps_swnd(ws)
        assert blob[:4] == b"SWND"
        assert struct.unpack_from("<HHIIIH", blob, 4) == (1, 0, 2, 4, 3, 2)
        assert struct.unpack_from("<H", blob, 22) == (2,) and blob[24:26] == b"c0"
        assert len(blob) == 22 + 2 * 4 + 2 * (2 + 4 * 12) + 4

    def test_hash_stable(self):
        h1 = hashlib.sha256(dumps_swnd(synthetic_sinusoids(per_class=5, seed=4))).hexdigest()
        h2 = hashlib.sha256(dumps_swnd(synthetic_sinusoids(per_class=5, seed=4))).hexdigest()
        assert h1 == h2

    def test_bad_magic(self):
        blob = bytearray(dumps_swnd(_set()))
        blob[0:4] = b"XWND"
        with pytest.raises(FormatError):
            loads_swnd(bytes(blob))

    def test_bad_version_with_valid_checksum(self):
        body = bytearray(dumps_swnd(_set())[:-4])
        body[4:6] = struct.pack("<H", 2)
        with pytest.raises(FormatError, match="version"):
            loads_swnd(bytes(body) + struct.pack("<I", zlib.crc32(bytes(body))))

    def test_nan_rejected_even_with_valid_checksum(self):
        ws = _set(n=1, subjects=False)
        body = bytearray(dumps_swnd(ws)[:-4])
        body[-4:] = struct.pack("<f", float("nan"))
        with pytest.raises(FormatError, match="non-finite"):
            loads_swnd(bytes(body) + struct.pack("<I", zlib.crc32(bytes(body))))

    def test_empty_set(self):
        ws = WindowSet(np.zeros((0, 5, 2)), [], ["x"])
        assert loads_swnd(dumps_swnd(ws)) == ws

    @given(st.data())
    @settings(max_examples=200, deadline=None)
    def test_fuzz_truncation_and_corruption(self, data):
        blob = dumps_swnd(_set(n=3, t=4, c=3))
        if data.draw(st.booleans()):
            cut = data.draw(st.integers(0, len(blob) - 1))
            bad = blob[:cut]
        else:
            pos = data.draw(st.integers(0, len(blob) - 1))
            flip = data.draw(st.integers(1, 255))
            bad = blob[:pos] + bytes([blob[pos] ^ flip]) + blob[pos + 1:]
        with pytest.raises(FormatError):
            loads_swnd(bad)


class TestSynthetic:
    def test_shape_and_balance(self):
        ws = synthetic_sinusoids()
        assert ws.data.shape == (1800, 128, 6)
        assert list(ws.class_counts()) == [600, 600, 600]

    def test_seeded(self):
        assert synthetic_sinusoids(per_class=4, seed=1) == synthetic_sinusoids(per_class=4, seed=1)

    def test_dominant_frequency_per_class(self):
        ws = synthetic_sinusoids(per_class=20, noise=0.0, freq_jitter=0.0)
        spectrum = np.abs(np.fft.rfft(ws.data, axis=1)).mean(axis=2)
        peaks = spectrum.argmax(axis=1)
        for c, cycles in enumerate((1.5, 7.5, 37.5)):
            assert np.all(np.abs(peaks[ws.labels == c] - cycles) <= 1)
