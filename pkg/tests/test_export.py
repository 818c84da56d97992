import numpy as np
import pytest

from dastft import export
from dastft.stft_core import FrameGrid, ShapeError, Spectrogram


def test_spectrogram_csv_round_trip(tmp_path, rng):
    values = rng.standard_normal((5, 9)) + 1j * rng.standard_normal((5, 9))
    values[0, 0] = complex(0.0, -0.0)
    spec = Spectrogram(values, FrameGrid(-8, 4, 5, 16), True)
    path = tmp_path / "s.csv"
    export.write_spectrogram_csv(spec, path)
    assert path.read_text().splitlines()[0] == "frames=5 bins=9 onesided=1 hop=4"
    back = export.read_spectrogram_csv(path, first_index=-8)
    np.testing.assert_array_equal(back.values, values)
    assert back.grid == spec.grid


def test_spectrogram_csv_bad_header(tmp_path):
    path = tmp_path / "s.csv"
    path.write_text("frames=2 bins=2\n1+0j,1+0j\n")
    with pytest.raises(ShapeError):
        export.read_spectrogram_csv(path)


def test_matrix_csv_round_trip(tmp_path, rng):
    m = rng.uniform(4, 256, (7, 1))
    export.write_matrix_csv(m, tmp_path / "m.csv")
    np.testing.assert_array_equal(export.read_matrix_csv(tmp_path / "m.csv"), m)


def test_pgm_round_trip(tmp_path, rng):
    # Includes samples whose bytes look like ASCII whitespace.
    image = rng.integers(0, 65536, (6, 11)).astype(np.uint16)
    image[0, :3] = [0x0A0A, 0x2020, 0x0D09]
    export.write_pgm(image, tmp_path / "x.pgm")
    np.testing.assert_array_equal(export.read_pgm(tmp_path / "x.pgm"), image)


def test_log_magnitude_image_orientation():
    mag = np.zeros((3, 4))
    mag[0, 3] = 2.0     # first frame, highest bin
    img = export.log_magnitude_image(mag)
    assert img.shape == (4, 3)
    assert img[0, 0] == 65535
    assert img.min() == 0


def test_theta_image_range():
    img = export.theta_image(np.array([[4.0, 130.0, 256.0]]), 4.0, 256.0)
    assert img[-1, 0] == 0 and img[0, 0] == 65535 and img[1, 0] == 32768
