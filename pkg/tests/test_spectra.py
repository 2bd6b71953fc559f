import numpy as np
import pytest

from donorspin.dynamics import EnsembleSpec, build_level_system
from donorspin.fitting import fit_spectral_lines, line_centers
from donorspin.material import CONSTANTS
from donorspin.spectra import SATELLITE_LABELS, simulate_ple, simulate_spectrum


@pytest.fixture
def ens():
    return EnsembleSpec()


class TestSpectrum:
    def test_zero_field_single_line(self, ens):
        s = simulate_spectrum(ens, "faraday", 0.0, seed=1)
        assert s.lines == {"zero_field": 3.3599}
        r = fit_spectral_lines(s, 1, [3.3599])
        assert abs(r["center_0"] - 3.3599) < 1e-6

    def test_faraday_splitting(self, ens):
        s = simulate_spectrum(ens, "faraday", 5.0, seed=1)
        lo, hi = sorted(s.lines.values())
        assert (hi - lo) == pytest.approx(3.19 * CONSTANTS.mu_B * 5.0, rel=1e-10)
        assert (hi - lo) * 1e6 == pytest.approx(923, abs=2)

    def test_fitted_centers(self, ens):
        s = simulate_spectrum(ens, "faraday", 5.0, seed=2)
        r = fit_spectral_lines(s, 2, sorted(s.lines.values()))
        for got, want in zip(line_centers(r), sorted(s.lines.values())):
            assert abs(got - want) < 5e-6

    def test_width_reproduced(self, ens):
        s = simulate_spectrum(ens, "faraday", 0.0, seed=3)
        r = fit_spectral_lines(s, 1, [3.3599])
        assert r["fwhm_0"] == pytest.approx(84.8e-6, rel=0.02)

    def test_voigt_four_lines(self, ens):
        s = simulate_spectrum(ens, "voigt", 5.0, seed=1)
        assert len(s.lines) == 4

    def test_labels(self, ens):
        s = simulate_spectrum(ens, "faraday", 1.0)
        assert s.labels == SATELLITE_LABELS

    def test_seeded(self, ens):
        a = simulate_spectrum(ens, "faraday", 3.0, seed=9)
        b = simulate_spectrum(ens, "faraday", 3.0, seed=9)
        np.testing.assert_array_equal(a.sampled, b.sampled)

    def test_negative_field(self, ens):
        with pytest.raises(ValueError):
            simulate_spectrum(ens, "faraday", -1.0)

    def test_two_donor_lines(self, ens):
        s = simulate_spectrum(ens, "faraday", 2.0, line_centers=(3.3599, 3.3608))
        assert len(s.lines) == 4


class TestPLE:
    def test_faraday_single_peak(self, ens):
        sysf = build_level_system("faraday", 5.0, 1.5)
        c0 = sysf.transition_energies["sigma_plus"]
        scan = np.linspace(c0 - 400e-6, c0 + 400e-6, 201)
        ple = simulate_ple(ens, sysf, scan)
        peaks = np.flatnonzero((ple.expected[1:-1] > ple.expected[:-2]) & (ple.expected[1:-1] > ple.expected[2:]))
        assert len(peaks) == 1
        assert abs(scan[peaks[0] + 1] - c0) < 5e-6

    def test_voigt_two_peaks(self, ens):
        s = build_level_system("voigt", 5.0, 1.5)
        e = s.transition_energies
        lo, hi = sorted([e["H_down"], e["V_down"]])
        scan = np.linspace(lo - 300e-6, hi + 300e-6, 321)
        ple = simulate_ple(ens, s, scan)
        r = fit_spectral_lines((scan, ple.expected), 2, [lo, hi])
        c = line_centers(r)
        assert (c[1] - c[0]) * 1e6 == pytest.approx(0.34 * CONSTANTS.mu_B * 5 * 1e6, abs=0.5)
        assert (c[1] - c[0]) * 1e6 == pytest.approx(98.4, abs=0.5)

    def test_zero_power(self, ens):
        s = build_level_system("voigt", 5.0, 1.5)
        ple = simulate_ple(ens, s, np.linspace(3.3595, 3.3605, 11), rate=0.0)
        assert np.all(ple.expected == 0)
