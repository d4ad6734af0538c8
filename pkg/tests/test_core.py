import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from zonalrad.core import (FEATURE_CSV_HEADER, FEATURE_NAMES, N_FEATURES, FeatureVector,
                           Modality, PairedSample, Patch, SchemaError, ValidationError, Zone,
                           ZoneDataset, feature_index, feature_name, load_dataset,
                           read_feature_csv, save_dataset, write_feature_csv)


def make_sample(rng, zone="PZ", label=0, i=0):
    kw = dict(zone=zone, label=label, case_id=f"case{i % 3}", sample_id=f"s{i}")
    return PairedSample(Patch(rng.normal(300, 50, (16, 16)), Modality.T2W, **kw),
                        Patch(rng.normal(1200, 200, (6, 6)), Modality.ADC, **kw), f"s{i}")


def make_dataset(rng, n=4, zone="PZ"):
    return ZoneDataset([make_sample(rng, zone, int(i % 4 == 0), i) for i in range(n)], zone)


class TestZone:
    def test_parse_tokens(self):
        assert Zone.parse("pz") is Zone.PZ
        assert Zone.parse(" TZ ") is Zone.TZ
        assert Zone.parse(Zone.AS) is Zone.AS

    def test_sv_rejected(self):
        with pytest.raises(ValidationError, match="SV"):
            Zone.parse("SV")

    def test_unknown_rejected(self):
        with pytest.raises(ValidationError):
            Zone.parse("CZ")


class TestFeatureNames:
    def test_examples(self):
        assert feature_name(0) == "t2_p10"
        assert feature_name(4) == "t2_asm"
        assert feature_name(13) == "adc_p10"
        assert feature_name(25) == "adc_tamura_roughness"

    def test_bijection(self):
        names = [feature_name(i) for i in range(N_FEATURES)]
        assert len(set(names)) == 26
        assert all(feature_index(n) == i for i, n in enumerate(names))

    @pytest.mark.parametrize("bad", [-1, 26, 1.0, "3"])
    def test_out_of_range(self, bad):
        with pytest.raises(ValidationError):
            feature_name(bad)

    def test_unknown_name(self):
        with pytest.raises(ValidationError):
            feature_index("t2_entropy")


class TestPatch:
    def test_modality_shapes(self):
        Patch(np.zeros((16, 16)), Modality.T2W, Zone.PZ, 0)
        Patch(np.zeros((6, 6)), Modality.ADC, Zone.PZ, 0)
        with pytest.raises(ValidationError):
            Patch(np.zeros((6, 6)), Modality.T2W, Zone.PZ, 0)
        with pytest.raises(ValidationError):
            Patch(np.zeros((16, 16)), Modality.ADC, Zone.PZ, 0)

    def test_non_finite_rejected(self):
        x = np.zeros((6, 6))
        x[2, 2] = np.nan
        with pytest.raises(ValidationError):
            Patch(x, Modality.ADC, Zone.PZ, 0)

    @pytest.mark.parametrize("label", [2, -1, 0.5])
    def test_label_rejected(self, label):
        with pytest.raises(ValidationError):
            Patch(np.zeros((6, 6)), Modality.ADC, Zone.PZ, label)

    def test_pixels_immutable(self):
        p = Patch(np.zeros((6, 6)), Modality.ADC, Zone.PZ, 0)
        with pytest.raises(ValueError):
            p.pixels[0, 0] = 1.0

    def test_pair_must_agree(self, rng):
        t2 = Patch(np.zeros((16, 16)), Modality.T2W, Zone.PZ, 1, "a")
        with pytest.raises(ValidationError):
            PairedSample(t2, Patch(np.zeros((6, 6)), Modality.ADC, Zone.PZ, 0, "a"), "x")
        with pytest.raises(ValidationError):
            PairedSample(t2, Patch(np.zeros((6, 6)), Modality.ADC, Zone.TZ, 1, "a"), "x")
        with pytest.raises(ValidationError):
            PairedSample(t2, t2, "x")


class TestFeatureVector:
    def test_length_and_finiteness(self):
        FeatureVector(np.zeros(26), 0, "PZ")
        with pytest.raises(ValidationError):
            FeatureVector(np.zeros(25), 0, "PZ")
        v = np.zeros(26)
        v[3] = np.inf
        with pytest.raises(ValidationError):
            FeatureVector(v, 0, "PZ")

    def test_as_dict_follows_order(self):
        fv = FeatureVector(np.arange(26.0), 1, "AS")
        assert list(fv.as_dict()) == list(FEATURE_NAMES)
        assert fv.as_dict()["adc_p10"] == 13.0


class TestDatasetContainer:
    def test_layout(self, rng, tmp_path):
        save_dataset(make_dataset(rng), tmp_path / "d")
        files = sorted(p.name for p in (tmp_path / "d").iterdir())
        assert files == ["labels.csv", "manifest.json", "patches_adc.bin", "patches_t2.bin"]
        assert (tmp_path / "d" / "patches_t2.bin").stat().st_size == 4 * 16 * 16 * 4
        assert (tmp_path / "d" / "patches_adc.bin").stat().st_size == 4 * 6 * 6 * 4

    def test_round_trip(self, rng, tmp_path):
        d = make_dataset(rng, 7, "TZ")
        save_dataset(d, tmp_path / "d")
        back = load_dataset(tmp_path / "d")
        assert back == d
        for a, b in zip(d.samples, back.samples):
            assert a.t2.pixels.tobytes() == b.t2.pixels.tobytes()
            assert a.adc.pixels.tobytes() == b.adc.pixels.tobytes()

    def test_empty_dataset(self, tmp_path):
        with pytest.raises(ValidationError, match="empty dataset"):
            save_dataset(ZoneDataset([], "PZ"), tmp_path / "d")

    def test_count_mismatch(self, rng, tmp_path):
        d = make_dataset(rng, 10)
        save_dataset(d, tmp_path / "d")
        manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
        raw = (tmp_path / "d" / "patches_t2.bin").read_bytes()
        (tmp_path / "d" / "patches_t2.bin").write_bytes(raw[:9 * 16 * 16 * 4])
        manifest["checksums"].pop("patches_t2.bin")
        (tmp_path / "d" / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ValidationError, match="declares 10"):
            load_dataset(tmp_path / "d")

    def test_sv_row_rejected(self, rng, tmp_path):
        save_dataset(make_dataset(rng), tmp_path / "d")
        path = tmp_path / "d" / "labels.csv"
        lines = path.read_text().splitlines()
        lines[1] = lines[1].replace(",PZ,", ",SV,")
        path.write_text("\n".join(lines) + "\n")
        manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
        manifest["checksums"].pop("labels.csv")
        (tmp_path / "d" / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(ValidationError, match="SV"):
            load_dataset(tmp_path / "d")

    def test_checksum_mismatch(self, rng, tmp_path):
        save_dataset(make_dataset(rng), tmp_path / "d")
        path = tmp_path / "d" / "patches_adc.bin"
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ValidationError, match="checksum"):
            load_dataset(tmp_path / "d")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(ValidationError):
            load_dataset(tmp_path)

    def test_zone_consistency(self, rng):
        with pytest.raises(ValidationError):
            ZoneDataset([make_sample(rng, "PZ"), make_sample(rng, "TZ")], "PZ")

    @given(n=st.integers(1, 12), zone=st.sampled_from(["PZ", "TZ", "AS"]),
           split=st.sampled_from(["train", "test"]), seed=st.integers(0, 2**32 - 1),
           scale=st.floats(1e-3, 1e6))
    def test_round_trip_property(self, tmp_path_factory, n, zone, split, seed, scale):
        r = np.random.default_rng(seed)
        samples = []
        for i in range(n):
            kw = dict(zone=zone, label=int(r.integers(2)), case_id=f"c{r.integers(5)}",
                      sample_id=f"id-{i}")
            samples.append(PairedSample(
                Patch(r.normal(0, scale, (16, 16)), Modality.T2W, **kw),
                Patch(r.normal(0, scale, (6, 6)), Modality.ADC, **kw), f"id-{i}"))
        d = ZoneDataset(samples, zone, split)
        path = tmp_path_factory.mktemp("rt")
        save_dataset(d, path)
        assert load_dataset(path) == d


class TestFeatureCsv:
    def test_round_trip_exact(self, rng, tmp_path):
        vecs = [FeatureVector(rng.normal(size=26) * 10.0 ** rng.integers(-5, 5), i % 2, "AS",
                              f"s{i}") for i in range(20)]
        write_feature_csv(tmp_path / "f.csv", vecs)
        table = read_feature_csv(tmp_path / "f.csv")
        assert np.array_equal(table.X, np.vstack([v.values for v in vecs]))
        assert table.y.tolist() == [i % 2 for i in range(20)]
        assert table.sample_ids == [f"s{i}" for i in range(20)]
        assert all(z is Zone.AS for z in table.zones)

    def test_header(self, tmp_path):
        write_feature_csv(tmp_path / "f.csv", [])
        header = (tmp_path / "f.csv").read_text().splitlines()[0].split(",")
        assert tuple(header) == FEATURE_CSV_HEADER
        assert header[:26] == list(FEATURE_NAMES)

    def test_wrong_schema(self, tmp_path):
        cols = list(FEATURE_NAMES[:25]) + ["sample_id", "zone", "label"]
        (tmp_path / "f.csv").write_text(",".join(cols) + "\n" + ",".join(["0"] * 25)
                                        + ",a,PZ,0\n")
        with pytest.raises(SchemaError, match="25 feature columns"):
            read_feature_csv(tmp_path / "f.csv")

    def test_empty_file(self, tmp_path):
        (tmp_path / "f.csv").write_text("")
        with pytest.raises(SchemaError):
            read_feature_csv(tmp_path / "f.csv")
