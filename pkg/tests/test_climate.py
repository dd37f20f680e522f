import numpy as np
import pytest

from ideotype.climate import (
    CSV_HEADER,
    ClimateError,
    ClimateSet,
    GeneratorConfig,
    SiteConfig,
    default_generator_config,
    generate_climate,
    load_climate,
    write_climate,
)


def _rows(sid, n, tmin=5.0, tmax=15.0):
    return [f"{sid},{d},{tmin},{tmax},10.0,2.0,0.0" for d in range(1, n + 1)]


def _write(tmp_path, lines):
    path = tmp_path / "climate.csv"
    path.write_text(",".join(CSV_HEADER) + "\n" + "\n".join(lines) + "\n", encoding="utf-8")
    return path


class TestLoadClimate:
    def test_two_valid_series(self, tmp_path):
        path = _write(tmp_path, _rows("a", 180) + _rows("b", 180))
        C = load_climate(path)
        assert len(C) == 2 and C.length == 180
        assert C.ids == ["a", "b"]
        assert C.array.shape == (2, 180, 5)

    def test_short_series_names_the_id(self, tmp_path):
        path = _write(tmp_path, _rows("a", 180) + _rows("short_one", 179))
        with pytest.raises(ClimateError, match="short_one"):
            load_climate(path)

    def test_tmax_below_tmin_names_id_and_day(self, tmp_path):
        lines = _rows("a", 180)
        lines[41] = "a,42,10.0,8.0,10.0,2.0,0.0"
        with pytest.raises(ClimateError, match=r"'a'.*day 42"):
            load_climate(_write(tmp_path, lines))

    def test_negative_rain_rejected(self, tmp_path):
        lines = _rows("a", 10)
        lines[3] = "a,4,5.0,15.0,10.0,2.0,-1.0"
        with pytest.raises(ClimateError, match="day 4"):
            load_climate(_write(tmp_path, lines), expected_length=10)

    def test_duplicate_day(self, tmp_path):
        lines = _rows("a", 10) + ["a,3,5.0,15.0,10.0,2.0,0.0"]
        with pytest.raises(ClimateError, match="duplicate"):
            load_climate(_write(tmp_path, lines), expected_length=10)

    def test_missing_day(self, tmp_path):
        lines = [r for r in _rows("a", 11) if not r.startswith("a,5,")]
        with pytest.raises(ClimateError, match="day 5"):
            load_climate(_write(tmp_path, lines), expected_length=10)

    def test_non_numeric(self, tmp_path):
        lines = _rows("a", 10)
        lines[0] = "a,1,cold,15.0,10.0,2.0,0.0"
        with pytest.raises(ClimateError, match="non-numeric"):
            load_climate(_write(tmp_path, lines), expected_length=10)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("id,day,a,b,c,d,e\n", encoding="utf-8")
        with pytest.raises(ClimateError, match="header"):
            load_climate(path)


class TestRoundTrip:
    def test_write_then_load_is_exact(self, tmp_path, climate20):
        path = tmp_path / "c.csv"
        write_climate(climate20, path)
        again = load_climate(path)
        assert again.ids == climate20.ids
        np.testing.assert_array_equal(again.array, climate20.array)

    def test_lf_line_endings(self, tmp_path, climate20):
        path = tmp_path / "c.csv"
        write_climate(climate20.subset([0]), path)
        assert b"\r\n" not in path.read_bytes()


class TestGenerator:
    def test_default_cardinality(self):
        C = generate_climate(default_generator_config(), seed=0)
        assert len(C) == 190
        assert C.length == 180

    def test_deterministic(self, tmp_path):
        cfg = default_generator_config(years=3)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_climate(generate_climate(cfg, 5), a)
        write_climate(generate_climate(cfg, 5), b)
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_output(self):
        cfg = default_generator_config(years=2)
        assert generate_climate(cfg, 1) != generate_climate(cfg, 2)

    def test_physical_invariants(self, climate60):
        A = climate60.array
        assert np.isfinite(A).all()
        assert (A[:, :, 1] >= A[:, :, 0]).all()
        assert (A[:, :, 2:] >= 0).all()

    def test_zero_wet_probability_gives_no_rain(self):
        site = SiteConfig("dry", wet_prob=0.0)
        C = generate_climate(GeneratorConfig(sites=(site,), years=3, length=60), 0)
        assert (C.array[:, :, 4] == 0).all()

    def test_site_order_invariance(self):
        a, b = default_generator_config(years=2).sites[:2]
        one = generate_climate(GeneratorConfig(sites=(a, b), years=2, length=40), 9)
        # a site's stream depends on (seed, index) only, not on what other sites drew
        alone = generate_climate(GeneratorConfig(sites=(a,), years=2, length=40), 9)
        np.testing.assert_array_equal(one.array[:2], alone.array)

    def test_config_dict_round_trip(self):
        cfg = default_generator_config(years=7, length=90)
        assert GeneratorConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("bad", [{"wet_prob": -0.1}, {"wet_prob": 1.5}, {"rain_depth": 0.0}])
    def test_site_validation(self, bad):
        with pytest.raises(ClimateError):
            SiteConfig("x", **bad)

    @pytest.mark.parametrize("bad", [{"years": 0}, {"length": 5}])
    def test_config_validation(self, bad):
        with pytest.raises(ClimateError):
            GeneratorConfig(sites=default_generator_config().sites, **bad)


class TestClimateSet:
    def test_subset_and_getitem(self, climate20):
        sub = climate20.subset([3, 1])
        assert sub.ids == [climate20.ids[3], climate20.ids[1]]
        np.testing.assert_array_equal(sub[0]["rain"], climate20.array[3, :, 4])

    def test_values_are_read_only(self, climate20):
        with pytest.raises(ValueError):
            climate20[0].values[0, 0] = 1.0

    def test_from_array_rejects_bad_order(self):
        arr = np.ones((1, 3, 5))
        arr[0, 1, 0] = 2.0  # tmin > tmax
        with pytest.raises(ClimateError):
            ClimateSet.from_array(arr)
