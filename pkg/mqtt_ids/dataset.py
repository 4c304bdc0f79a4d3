import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from mqtt_ids.data import (LEVEL_COLUMN_TYPES, PACKET_COLUMN_TYPES, ColumnType, DataException, FeatureLevel,
                           FeatureRecord, TrafficClass, canonical_class_order)
from mqtt_ids.labels import LabelRuleSet

logger = logging.getLogger(__name__)

IP_COLUMNS = ("ip_src", "ip_dest")
MQTT_FLAG_COLUMNS = tuple(name for name in PACKET_COLUMN_TYPES if name.startswith("mqtt_flag_"))
MQTT_SCALAR_COLUMNS = ("mqtt_messagetype", "mqtt_messagelength")

LEAKY_COLUMNS: Dict[FeatureLevel, Tuple[str, ...]] = {
    FeatureLevel.PACKET: IP_COLUMNS + ("protocol",) + MQTT_FLAG_COLUMNS,
    FeatureLevel.UNIFLOW: IP_COLUMNS,
    FeatureLevel.BIFLOW: IP_COLUMNS,
}

_NUMPY_DTYPES = {ColumnType.TEXT: object, ColumnType.INTEGER: np.int64, ColumnType.DECIMAL: np.float64}


class SchemaMismatchException(DataException):
    def __init__(self, source, reason) -> None:
        super().__init__(f"The feature table '{source}' does not match any known layout: {reason}")


class MissingColumnException(DataException):
    def __init__(self, column, level) -> None:
        super().__init__(f"The {level.value} table has no column '{column}'.")


class DegenerateSplitException(DataException):
    def __init__(self, label, count) -> None:
        super().__init__(f"Class '{label}' has {count} row(s); at least 2 are needed to split it.")


class NonNumericColumnException(DataException):
    def __init__(self, columns) -> None:
        super().__init__(f"Columns {list(columns)} are not numeric; drop the leaky columns before training.")


def _empty_column(column_type: ColumnType) -> np.ndarray:
    return np.array([], dtype=_NUMPY_DTYPES[column_type])


@dataclass(eq=False)
class FeatureTable:
    """An immutable, column-oriented feature table. `data` maps each name in `columns` to a 1-d array; labels
    are kept apart from the features. Equality ignores `source`."""
    level: FeatureLevel
    columns: List[str]
    data: Dict[str, np.ndarray]
    is_attack: np.ndarray
    labels: np.ndarray
    source: str = field(default="")

    def __post_init__(self):
        n = len(self.labels)
        if len(self.is_attack) != n or any(len(self.data[name]) != n for name in self.columns):
            raise SchemaMismatchException(self.source, "columns have different lengths")

    @classmethod
    def from_records(cls, level: FeatureLevel, records: Sequence[FeatureRecord], source: str = "") -> "FeatureTable":
        column_types = LEVEL_COLUMN_TYPES[level]
        columns = list(column_types)
        if records:
            rows = list(zip(*(record.as_row() for record in records)))
            data = {name: np.array(values, dtype=_NUMPY_DTYPES[column_types[name]])
                    for name, values in zip(columns, rows)}
        else:
            data = {name: _empty_column(column_type) for name, column_type in column_types.items()}
        return cls(level=level, columns=columns, data=data,
                   is_attack=np.array([record.is_attack for record in records], dtype=np.int64),
                   labels=np.array([record.traffic_class for record in records], dtype=object),
                   source=source)

    @property
    def n_rows(self) -> int:
        return len(self.labels)

    @property
    def classes(self) -> List[str]:
        return canonical_class_order(self.labels)

    def class_counts(self) -> Dict[str, int]:
        return {label: int(np.sum(self.labels == label)) for label in self.classes}

    def non_numeric_columns(self) -> List[str]:
        return [name for name in self.columns if self.data[name].dtype == object]

    def matrix(self) -> np.ndarray:
        non_numeric = self.non_numeric_columns()
        if non_numeric:
            raise NonNumericColumnException(non_numeric)
        if not self.columns:
            return np.zeros((self.n_rows, 0))
        return np.column_stack([self.data[name].astype(np.float64) for name in self.columns])

    def take(self, indices: np.ndarray) -> "FeatureTable":
        indices = np.asarray(indices, dtype=np.int64)
        return FeatureTable(level=self.level, columns=list(self.columns),
                            data={name: self.data[name][indices] for name in self.columns},
                            is_attack=self.is_attack[indices], labels=self.labels[indices], source=self.source)

    def drop(self, columns: Iterable[str]) -> "FeatureTable":
        dropped = set(columns)
        for name in dropped:
            if name not in self.data:
                raise MissingColumnException(name, self.level)
        kept = [name for name in self.columns if name not in dropped]
        return FeatureTable(level=self.level, columns=kept, data={name: self.data[name] for name in kept},
                            is_attack=self.is_attack, labels=self.labels, source=self.source)

    def with_matrix(self, matrix: np.ndarray) -> "FeatureTable":
        return FeatureTable(level=self.level, columns=list(self.columns),
                            data={name: matrix[:, i].copy() for i, name in enumerate(self.columns)},
                            is_attack=self.is_attack, labels=self.labels, source=self.source)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (self.level == other.level and self.columns == other.columns
                and all(self.data[name].dtype.kind == other.data[name].dtype.kind
                        and np.array_equal(self.data[name], other.data[name]) for name in self.columns)
                and np.array_equal(self.is_attack, other.is_attack)
                and np.array_equal(self.labels, other.labels))


def concat_tables(tables: Sequence[FeatureTable]) -> FeatureTable:
    if not tables:
        raise SchemaMismatchException("<none>", "no tables to combine")
    first = tables[0]
    for table in tables[1:]:
        if table.level != first.level or table.columns != first.columns:
            raise SchemaMismatchException(table.source, f"cannot be combined with '{first.source}'")
    if len(tables) == 1:
        return first
    return FeatureTable(level=first.level, columns=list(first.columns),
                        data={name: np.concatenate([t.data[name] for t in tables]) for name in first.columns},
                        is_attack=np.concatenate([t.is_attack for t in tables]),
                        labels=np.concatenate([t.labels for t in tables]),
                        source=",".join(t.source for t in tables))


def drop_leaky_columns(t: FeatureTable, drop_mqtt_scalars: bool = False) -> FeatureTable:
    """Remove the columns that identify hosts rather than behaviour (addresses, the protocol label and the MQTT
    CONNECT flags). mqtt_messagetype and mqtt_messagelength stay unless `drop_mqtt_scalars` is set."""
    leaky = LEAKY_COLUMNS[t.level]
    if drop_mqtt_scalars and t.level == FeatureLevel.PACKET:
        leaky = leaky + MQTT_SCALAR_COLUMNS
    for name in leaky:
        if name not in t.data:
            raise MissingColumnException(name, t.level)
    return t.drop(leaky)


def classifier_view(t: FeatureTable, drop_mqtt_scalars: bool = False) -> FeatureTable:
    """The table as the classifiers see it. Tables already stripped of the leaky columns pass through."""
    if any(name in t.data for name in LEAKY_COLUMNS[t.level]):
        return drop_leaky_columns(t, drop_mqtt_scalars)
    if drop_mqtt_scalars and t.level == FeatureLevel.PACKET:
        return t.drop(name for name in MQTT_SCALAR_COLUMNS if name in t.data)
    return t


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def split_holdout(t: FeatureTable, train_fraction: float, seed: int) -> Tuple[FeatureTable, FeatureTable]:
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must be strictly between 0 and 1, got {train_fraction}")
    counts = t.class_counts()
    for label, count in counts.items():
        if count < 2:
            raise DegenerateSplitException(label, count)

    # Largest-remainder apportionment keeps every class within one row of its share and the total exact.
    quotas = {label: train_fraction * count for label, count in counts.items()}
    per_class = {label: int(math.floor(quota)) for label, quota in quotas.items()}
    remainder = _round_half_up(train_fraction * t.n_rows) - sum(per_class.values())
    by_remainder = sorted(counts, key=lambda label: -(quotas[label] - per_class[label]))
    for label in by_remainder[:remainder]:
        per_class[label] += 1

    rng = np.random.default_rng(seed)
    train_indices, test_indices = [], []
    for label in counts:
        shuffled = rng.permutation(np.flatnonzero(t.labels == label))
        train_indices.append(shuffled[:per_class[label]])
        test_indices.append(shuffled[per_class[label]:])
    train = np.sort(np.concatenate(train_indices))
    test = np.sort(np.concatenate(test_indices))
    return t.take(train), t.take(test)


@dataclass
class Standardizer:
    columns: List[str]
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit_matrix(cls, matrix: np.ndarray, columns: Sequence[str]) -> "Standardizer":
        if len(matrix) == 0:
            return cls(list(columns), np.zeros(matrix.shape[1]), np.zeros(matrix.shape[1]))
        return cls(list(columns), matrix.mean(axis=0), matrix.std(axis=0))

    @classmethod
    def fit(cls, table: FeatureTable) -> "Standardizer":
        return cls.fit_matrix(table.matrix(), table.columns)

    def transform_matrix(self, matrix: np.ndarray) -> np.ndarray:
        # Zero-variance columns are only centered.
        scale = np.where(self.std > 0, self.std, 1.0)
        return (matrix - self.mean) / scale

    def transform(self, table: FeatureTable) -> FeatureTable:
        if table.columns != self.columns:
            raise SchemaMismatchException(table.source, f"columns {table.columns} differ from the standardizer's "
                                                        f"{self.columns}")
        return table.with_matrix(self.transform_matrix(table.matrix()))

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, source_dict: dict) -> "Standardizer":
        return cls(list(source_dict["columns"]), np.array(source_dict["mean"], dtype=np.float64),
                   np.array(source_dict["std"], dtype=np.float64))


def standardize(train: FeatureTable, others: Sequence[FeatureTable] = ()) -> Tuple[Standardizer, List[FeatureTable]]:
    """Fit z-scoring on `train` only and apply it to `train` and every table in `others`."""
    standardizer = Standardizer.fit(train)
    return standardizer, [standardizer.transform(table) for table in [train, *others]]


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def write_feature_csv(t: FeatureTable, output: Union[str, Path, IO[str]]) -> None:
    if isinstance(output, (str, Path)):
        with open(output, 'w', newline='') as output_file:
            write_feature_csv(t, output_file)
        return
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(t.columns + ["is_attack", "class"])
    for i in range(t.n_rows):
        writer.writerow([_format_cell(t.data[name][i]) for name in t.columns]
                        + [str(int(t.is_attack[i])), t.labels[i]])


def _accepted_layouts(level: FeatureLevel) -> List[List[str]]:
    full = list(LEVEL_COLUMN_TYPES[level])
    without_leaky = [name for name in full if name not in LEAKY_COLUMNS[level]]
    layouts = [full, without_leaky]
    if level == FeatureLevel.PACKET:
        layouts.append([name for name in without_leaky if name not in MQTT_SCALAR_COLUMNS])
    return layouts


def _match_layout(header: Sequence[str], source: str) -> Tuple[FeatureLevel, List[str]]:
    features = set(header) - {"is_attack", "class"}
    closest, closest_overlap = None, -1
    for level in FeatureLevel:
        for layout in _accepted_layouts(level):
            if features == set(layout):
                return level, layout
        overlap = len(features & set(LEVEL_COLUMN_TYPES[level]))
        if overlap > closest_overlap:
            closest, closest_overlap = level, overlap
    assert closest is not None
    known = set(LEVEL_COLUMN_TYPES[closest])
    unknown = sorted(features - known)
    missing = [name for name in LEVEL_COLUMN_TYPES[closest] if name not in features
               and name not in LEAKY_COLUMNS[closest] + MQTT_SCALAR_COLUMNS]
    raise SchemaMismatchException(source, f"closest layout is {closest.value}; unknown columns {unknown}, "
                                          f"missing columns {missing}")


def _parse_column(values: List[str], column_type: ColumnType, name: str, source: str) -> np.ndarray:
    if not values:
        return _empty_column(column_type)
    try:
        if column_type == ColumnType.INTEGER:
            return np.array([int(value) for value in values], dtype=np.int64)
        if column_type == ColumnType.DECIMAL:
            return np.array([float(value) for value in values], dtype=np.float64)
    except ValueError as e:
        raise SchemaMismatchException(source, f"column '{name}' holds a non-numeric cell. Details: {e}")
    return np.array(values, dtype=object)


def read_feature_csv(input: Union[str, Path, IO[str]], rules: Optional[LabelRuleSet] = None) -> FeatureTable:
    """Read a feature table. Columns may come in any order. A file without a `class` column (the published
    dataset layout) gets its classes from `rules`: the attack class where is_attack is 1, Benign elsewhere."""
    if isinstance(input, (str, Path)):
        with open(input, newline='') as input_file:
            table = read_feature_csv(input_file, rules)
        table.source = str(input)
        return table

    source = getattr(input, 'name', '<stream>')
    reader = csv.reader(input)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaMismatchException(source, "the file is empty")
    level, layout = _match_layout(header, source)
    positions = {name: i for i, name in enumerate(header)}
    rows = [row for row in reader if row]
    for line_number, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise SchemaMismatchException(source, f"line {line_number} has {len(row)} cells, expected {len(header)}")

    column_types = LEVEL_COLUMN_TYPES[level]
    data = {name: _parse_column([row[positions[name]] for row in rows], column_types[name], name, source)
            for name in layout}

    is_attack = None
    if "is_attack" in positions:
        is_attack = _parse_column([row[positions["is_attack"]] for row in rows], ColumnType.INTEGER, "is_attack",
                                  source)
    if "class" in positions:
        labels = np.array([row[positions["class"]] for row in rows], dtype=object)
        if is_attack is None:
            is_attack = (labels != TrafficClass.BENIGN.value).astype(np.int64)
    elif is_attack is not None and rules is not None:
        labels = np.where(is_attack == 1, rules.attack_class.value, TrafficClass.BENIGN.value).astype(object)
    else:
        raise SchemaMismatchException(source, "no 'class' column, and no label rules to derive it from is_attack")
    return FeatureTable(level=level, columns=layout, data=data, is_attack=is_attack, labels=labels, source=source)
