"""Tests for the shared I/O helpers."""

import hashlib
import json
from pathlib import Path

import pytest

from satstack.utils import (
    file_digest,
    format_json,
    format_number,
    parse_vector,
    read_json,
    write_csv_atomic,
    write_text_atomic,
)


class TestParseVector:
    def test_plain(self) -> None:
        assert parse_vector("1,-2.5, 3e2") == [1.0, -2.5, 300.0]

    def test_brackets(self) -> None:
        assert parse_vector(" [0, 0.5] ") == [0.0, 0.5]

    @pytest.mark.parametrize("text", ["", "[]", "1,,2", "1,a"])
    def test_rejects(self, text: str) -> None:
        with pytest.raises(ValueError):
            parse_vector(text)


def test_format_json_is_sorted() -> None:
    assert format_json({"b": 1, "a": [1.5]}, indent=None) == '{"a": [1.5], "b": 1}'


def test_format_number_round_trips() -> None:
    value = 1.0 / 3.0
    assert float(format_number(value)) == value
    assert format_number(2) == "2.0"


class TestAtomicWrites:
    def test_text(self, tmp_path: Path) -> None:
        path = write_text_atomic(tmp_path / "nested" / "out.txt", "hello\n")
        assert path.read_text(encoding="utf-8") == "hello\n"
        assert list(path.parent.iterdir()) == [path]

    def test_csv(self, tmp_path: Path) -> None:
        path = write_csv_atomic(tmp_path / "t.csv", ["t", "x"], [[0.0, 1], [0.5, "a"]])
        assert path.read_text(encoding="utf-8") == "t,x\n0.0,1\n0.5,a\n"

    def test_digest(self, tmp_path: Path) -> None:
        path = write_text_atomic(tmp_path / "d.txt", "abc")
        assert file_digest(path) == hashlib.sha256(b"abc").hexdigest()


class TestReadJson:
    def test_reads(self, tmp_path: Path) -> None:
        path = tmp_path / "doc.json"
        path.write_text(json.dumps({"n": 3}), encoding="utf-8")
        assert read_json(path) == {"n": 3}

    def test_missing(self, tmp_path: Path) -> None:
        with pytest.raises(FileNotFoundError):
            read_json(tmp_path / "absent.json")

    def test_directory(self, tmp_path: Path) -> None:
        with pytest.raises(IsADirectoryError):
            read_json(tmp_path)

    def test_malformed_is_value_error(self, tmp_path: Path) -> None:
        path = tmp_path / "bad.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ValueError):
            read_json(path)
