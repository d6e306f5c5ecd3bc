"""Tests for atomic file replacement."""

import pandas as pd
import pytest

from src.storage.atomic import AtomicFile, write_csv


def leftovers(directory):
    return [p.name for p in directory.iterdir() if ".tmp." in p.name]


def test_writes_and_creates_parents(tmp_path):
    target = tmp_path / "nested" / "deeper" / "out.bin"
    assert AtomicFile().atomic_bytes_update(target, b"\x00\x01") == target
    assert target.read_bytes() == b"\x00\x01"
    assert leftovers(target.parent) == []


def test_replaces_existing_file(tmp_path):
    target = tmp_path / "payload.bin"
    atomic = AtomicFile()
    atomic.atomic_bytes_update(target, b"first")
    atomic.atomic_bytes_update(target, b"second")
    assert target.read_bytes() == b"second"


def test_failed_write_keeps_original(tmp_path):
    target = tmp_path / "table.csv"
    target.write_text("original")

    def broken(tmp):
        tmp.write_text("partial")
        raise RuntimeError("disk full")

    with pytest.raises(RuntimeError, match="disk full"):
        AtomicFile().atomic_update(target, broken)
    assert target.read_text() == "original"
    assert leftovers(tmp_path) == []


def test_csv_without_index(tmp_path):
    target = write_csv(tmp_path / "rows.csv", pd.DataFrame({'a': [1, 2], 'b': ["x", "y"]}))
    assert target.read_text().splitlines() == ["a,b", "1,x", "2,y"]
