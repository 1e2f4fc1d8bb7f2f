import numpy as np
import pytest

from jeq.geom.core import Grid, HermitianField, PotentialField
from jeq.geom.fieldio import (
    HEADER_DTYPE,
    export_csv,
    read_field,
    write_field,
    write_table,
)


def test_jeqf_layout(tmp_path, grid1):
    x, y = grid1.coordinates()
    phi = PotentialField(grid1, np.cos(x) * np.sin(y))
    path = tmp_path / "phi.jeqf"
    write_field(path, phi)
    raw = path.read_bytes()
    assert HEADER_DTYPE.itemsize == 32
    assert raw[:4] == b"JEQF"
    assert len(raw) == 32 + 8 * 2 + 8 * grid1.size
    back = read_field(path)
    assert back.grid == grid1
    assert np.array_equal(back.values, phi.values)


def test_hermitian_field_dump(tmp_path):
    grid = Grid(2, 8, (1.0, 2.0, 3.0, 4.0))
    matrix = np.array([[2.0, 0.5 + 0.25j], [0.5 - 0.25j, 1.0]])
    form = HermitianField.constant(grid, matrix)
    write_field(tmp_path / "form.jeqf", form)
    back = read_field(tmp_path / "form.jeqf")
    assert back.grid.periods == (1.0, 2.0, 3.0, 4.0)
    assert np.array_equal(back.values, form.values)


def test_read_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.jeqf"
    path.write_bytes(b"NOPE" + bytes(60))
    with pytest.raises(ValueError):
        read_field(path)


def test_tables(tmp_path, grid1):
    write_table(tmp_path / "t.csv", ["a", "b"], [[1.0, 0.1], [2.0, 1e-17]])
    lines = (tmp_path / "t.csv").read_bytes().split(b"\n")
    assert lines[0] == b"a,b"
    assert lines[1] == b"1,0.10000000000000001"
    assert b"\r" not in (tmp_path / "t.csv").read_bytes()
    write_table(tmp_path / "empty.csv", ["a", "b"], np.empty((0, 2)))
    assert (tmp_path / "empty.csv").read_text().strip() == "a,b"

    export_csv(tmp_path / "phi.csv", PotentialField.zeros(grid1))
    lines = (tmp_path / "phi.csv").read_text().splitlines()
    assert lines[0] == "i1,i2,value"
    assert len(lines) == 1 + grid1.size
