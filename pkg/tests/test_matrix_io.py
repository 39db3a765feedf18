from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from app.core.exceptions import InvalidInputError
from app.utils.matrix_io import MatrixLoader, load_system_definition

SAMPLE = Path(__file__).resolve().parents[1] / "sample_data"


def test_header_sets_shape(tmp_path):
    path = tmp_path / "A.txt"
    path.write_text("3 2\n1 0\n0 1\n1 1\n")
    A = MatrixLoader.load_from_file(str(path))
    assert A.shape == (3, 2)
    assert_array_equal(A, [[1, 0], [0, 1], [1, 1]])


def test_entries_may_wrap_lines(tmp_path):
    path = tmp_path / "A.txt"
    path.write_text("# wrapped\n2 3\n1 2 3 4\n5 6  # trailing comment\n")
    assert_array_equal(MatrixLoader.load_from_file(str(path)), [[1, 2, 3], [4, 5, 6]])


@pytest.mark.parametrize("text", [
    "3 2\n1 0\n0 1\n",          # too few entries
    "2 2\n1 0\n0 1\n1 1\n",     # too many entries
    "1 0\n0 1\n1 1\n",          # no header
    "2.5 2\n1 0 0 1 1 1\n",     # non-integer header
    "# only a comment\n",
])
def test_malformed_files_are_rejected(tmp_path, text):
    path = tmp_path / "A.txt"
    path.write_text(text)
    with pytest.raises(InvalidInputError):
        MatrixLoader.load_from_file(str(path))


def test_save_writes_header(tmp_path):
    A = np.array([[1.0, -2.5], [1.0 / 3.0, 4.0], [0.0, 1e-300]])
    path = MatrixLoader.save(str(tmp_path / "out" / "A.txt"), A, header="provenance")
    lines = path.read_text().splitlines()
    assert lines[0] == "# provenance"
    assert lines[1] == "3 2"
    assert_array_equal(MatrixLoader.load_from_file(str(path)), A)


def test_unsupported_extension(tmp_path):
    path = tmp_path / "A.csv"
    path.write_text("1 1\n1\n")
    with pytest.raises(InvalidInputError):
        MatrixLoader.load_from_file(str(path))


def test_sample_system_definition():
    system = load_system_definition(str(SAMPLE / "chain6_system.json"))
    assert system["M"].shape == (6, 6)
    assert system["K"].shape == (6, 6)
    assert system["B"].shape == (6, 1)
    assert system["C"].shape == (2, 6)
