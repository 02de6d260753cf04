"""Arquivos de saída versionados: JSON, CSV, JSON lines e snapshots binários"""
import csv
import json
import logging
import math
import struct
from typing import Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from src import ARTIFACT_VERSION
from src.models.errors import ValidationError
from src.services.lattice import FourierState, TruncatedLattice
from src.services.potential import BlockPotential

logger = logging.getLogger(__name__)

SNAPSHOT_MAGIC = b'NLSS'
SNAPSHOT_VERSION = 1
# magic, versão, d, K_max, passo, tempo
SNAPSHOT_HEADER = struct.Struct('<4sIIIQd')


def build_meta(config_hash: str, command: str) -> Dict[str, str]:
    return {'artifact_version': ARTIFACT_VERSION, 'config_hash': config_hash, 'command': command}


def to_jsonable(value: Any) -> Any:
    """Converte numpy e infinitos (sentinela "inf") para JSON estrito"""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    if isinstance(value, complex):
        return {'re': value.real, 'im': value.imag}
    return value


def write_json(path: str, payload: Dict, meta: Dict[str, str]) -> str:
    document = dict(to_jsonable(payload))
    document['meta'] = meta
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(document, handle, sort_keys=True, indent=2, allow_nan=False)
        handle.write('\n')
    logger.debug("JSON gravado: %s", path)
    return path


def read_json(path: str) -> Dict:
    with open(path, 'r', encoding='utf-8') as handle:
        return json.load(handle)


def write_jsonl(path: str, records: Iterable[Dict], meta: Dict[str, str]) -> str:
    with open(path, 'w', encoding='utf-8') as handle:
        handle.write(json.dumps({'meta': meta}, sort_keys=True) + '\n')
        for record in records:
            handle.write(json.dumps(to_jsonable(record), sort_keys=True, allow_nan=False) + '\n')
    return path


def read_jsonl(path: str) -> Tuple[Dict, List[Dict]]:
    with open(path, 'r', encoding='utf-8') as handle:
        lines = [json.loads(line) for line in handle if line.strip()]
    if not lines or 'meta' not in lines[0]:
        raise ValidationError(f"Arquivo JSON lines sem cabeçalho meta: {path}")
    return lines[0]['meta'], lines[1:]


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence], meta: Dict[str, str]) -> str:
    with open(path, 'w', encoding='utf-8', newline='') as handle:
        for key in sorted(meta):
            handle.write(f'# {key}={meta[key]}\n')
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def read_csv(path: str) -> Tuple[Dict[str, str], List[Dict[str, str]]]:
    meta: Dict[str, str] = {}
    with open(path, 'r', encoding='utf-8', newline='') as handle:
        body = []
        for line in handle:
            if line.startswith('# '):
                key, _, value = line[2:].rstrip('\n').partition('=')
                meta[key] = value
            else:
                body.append(line)
    return meta, list(csv.DictReader(body))


def dump_potential(path: str, potential: BlockPotential, meta: Dict[str, str]) -> str:
    return write_json(path, potential.to_dict(), meta)


def load_potential(path: str) -> BlockPotential:
    try:
        data = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"Potencial ilegível em {path}: {exc}")
    data.pop('meta', None)
    return BlockPotential.from_dict(data)


def write_snapshot(path: str, u: FourierState, step: int, time: float) -> str:
    header = SNAPSHOT_HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, u.lattice.d, u.lattice.k_max, step, time)
    body = np.ascontiguousarray(u.amplitudes, dtype='<c16').tobytes()
    with open(path, 'wb') as handle:
        handle.write(header)
        handle.write(body)
    return path


def read_snapshot(path: str) -> Tuple[FourierState, int, float]:
    with open(path, 'rb') as handle:
        raw = handle.read()
    if len(raw) < SNAPSHOT_HEADER.size:
        raise ValidationError(f"Snapshot truncado: {path}")
    magic, version, d, k_max, step, time = SNAPSHOT_HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValidationError(f"Assinatura de snapshot inválida: {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise ValidationError(f"Versão de snapshot não suportada: {version}")
    lattice = TruncatedLattice(d, k_max)
    values = np.frombuffer(raw, dtype='<c16', offset=SNAPSHOT_HEADER.size)
    if values.size != lattice.size:
        raise ValidationError(f"Snapshot com {values.size} valores, esperado {lattice.size}")
    return FourierState(lattice, values.reshape(lattice.shape)), int(step), float(time)
