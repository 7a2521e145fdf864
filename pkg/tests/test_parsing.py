import pytest

from ubmot.commands.parsing import parse_int_range, parse_real_grid
from ubmot.utils.errors import DomainError


def test_int_ranges():
    assert parse_int_range("1..4") == [1, 2, 3, 4]
    assert parse_int_range("1,4,9") == [1, 4, 9]
    assert parse_int_range("7") == [7]
    assert parse_int_range("1..2,10") == [1, 2, 10]


def test_real_grids():
    assert parse_real_grid("0:1:5") == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert parse_real_grid("0.5,2") == [0.5, 2.0]
    assert parse_real_grid("1..3") == [1.0, 2.0, 3.0]


@pytest.mark.parametrize("text", ["", "a", "3..1", "1..x"])
def test_bad_int_ranges(text):
    with pytest.raises(DomainError):
        parse_int_range(text)


@pytest.mark.parametrize("text", ["0:1", "0:1:0", "x"])
def test_bad_real_grids(text):
    with pytest.raises(DomainError):
        parse_real_grid(text)
