import math

import numpy as np
import pytest

from src import ARTIFACT_VERSION
from src.models.errors import ValidationError
from src.services.lattice import TruncatedLattice, random_state
from src.services.serialization import (build_meta, dump_potential, load_potential, read_csv, read_json,
                                        read_jsonl, read_snapshot, to_jsonable, write_csv, write_json,
                                        write_jsonl, write_snapshot)


@pytest.fixture
def meta():
    return build_meta('abc123', 'smalldiv-scan')


def test_meta_fields(meta):
    assert meta == {'artifact_version': ARTIFACT_VERSION, 'config_hash': 'abc123', 'command': 'smalldiv-scan'}


class TestJson:

    def test_infinity_sentinel(self, tmp_path, meta):
        path = write_json(str(tmp_path / 'gamma.json'), {'gamma': math.inf, 'values': np.array([1.5, 2.0])}, meta)
        data = read_json(path)
        assert data['gamma'] == 'inf'
        assert data['values'] == [1.5, 2.0]
        assert data['meta'] == meta

    def test_numpy_scalars_and_complex(self):
        assert to_jsonable({'n': np.int64(3), 'flag': np.bool_(True), 'z': 1 + 2j}) == \
            {'n': 3, 'flag': True, 'z': {'re': 1.0, 'im': 2.0}}
        assert to_jsonable(-math.inf) == '-inf'
        assert to_jsonable(math.nan) == 'nan'

    def test_jsonl_header(self, tmp_path, meta):
        path = write_jsonl(str(tmp_path / 'scan.jsonl'), [{'k': [1, 2], 'abs_omega': 8.0}], meta)
        header, records = read_jsonl(path)
        assert header == meta
        assert records == [{'k': [1, 2], 'abs_omega': 8.0}]

    def test_jsonl_without_header(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text('{"k": 1}\n')
        with pytest.raises(ValidationError):
            read_jsonl(str(path))


class TestCsv:

    def test_meta_comments_and_exact_floats(self, tmp_path, meta):
        value = 0.1 + 0.2
        path = write_csv(str(tmp_path / 'traj.csv'), ['step', 'mass'], [[0, value], [10, 1 / 3]], meta)
        with open(path, encoding='utf-8') as handle:
            head = [next(handle) for _ in range(3)]
        assert head == ['# artifact_version=1.0.0\n', '# command=smalldiv-scan\n', '# config_hash=abc123\n']
        read_meta, rows = read_csv(path)
        assert read_meta == meta
        assert float(rows[0]['mass']) == value
        assert float(rows[1]['mass']) == 1 / 3
        assert rows[1]['step'] == '10'


class TestSnapshot:

    def test_restores_state_exactly(self, tmp_path, rng):
        lattice = TruncatedLattice(1, 4)
        u = random_state(lattice, rng)
        path = write_snapshot(str(tmp_path / 'snap.bin'), u, 250, 0.25)
        restored, step, time = read_snapshot(path)
        assert restored.lattice == lattice
        assert np.array_equal(restored.flat, u.flat)
        assert (step, time) == (250, 0.25)

    def test_bad_magic(self, tmp_path, rng):
        path = tmp_path / 'snap.bin'
        write_snapshot(str(path), random_state(TruncatedLattice(1, 2), rng), 0, 0.0)
        raw = bytearray(path.read_bytes())
        raw[:4] = b'XXXX'
        path.write_bytes(bytes(raw))
        with pytest.raises(ValidationError):
            read_snapshot(str(path))

    def test_truncated(self, tmp_path, rng):
        path = tmp_path / 'snap.bin'
        write_snapshot(str(path), random_state(TruncatedLattice(1, 2), rng), 0, 0.0)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(ValidationError):
            read_snapshot(str(path))


class TestPotentialFile:

    def test_dump_and_load(self, tmp_path, meta, potential):
        path = dump_potential(str(tmp_path / 'potential.json'), potential, meta)
        restored = load_potential(path)
        assert restored.seed == potential.seed
        assert np.array_equal(restored.block_values, potential.block_values)
        assert read_json(path)['meta'] == meta

    def test_unreadable(self, tmp_path):
        path = tmp_path / 'potential.json'
        path.write_text('{not json')
        with pytest.raises(ValidationError):
            load_potential(str(path))
