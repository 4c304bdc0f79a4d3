from io import StringIO

import numpy as np
import pytest

from mqtt_ids.data import (FeatureLevel, FlowKey, FlowStats, ParsedPacket, Scenario, TcpFlags, Transport,
                           UniFlowRecord)
from mqtt_ids.dataset import (DegenerateSplitException, FeatureTable, MissingColumnException,
                              NonNumericColumnException, SchemaMismatchException, Standardizer, classifier_view,
                              concat_tables, drop_leaky_columns, read_feature_csv, split_holdout, standardize,
                              write_feature_csv)
from mqtt_ids.features import extract_packet_features
from mqtt_ids.labels import LabelRuleSet

ATTACKER = "192.168.1.66"
BROKER = "192.168.1.10"
RULES = LabelRuleSet.for_scenario(Scenario.MQTT_BF, {ATTACKER})

PACKET = ParsedPacket(timestamp=1.0, ip_src=ATTACKER, ip_dest=BROKER, ttl=64, ip_len=60, ip_flag_df=True,
                      ip_flag_mf=False, ip_flag_rb=False, transport=Transport.TCP, prt_src=40000, prt_dst=1883,
                      tcp_flags=TcpFlags(syn=True), payload_len=0)


def uniflow(i: int, attack: bool) -> UniFlowRecord:
    src = ATTACKER if attack else f"192.168.1.{101 + i % 5}"
    stats = FlowStats(num_pkts=1 + i, mean_iat=0.5 * i, std_iat=0.1, min_iat=0.0, max_iat=float(i), num_bytes=60 * i,
                      num_psh_flags=i % 3, num_rst_flags=0, num_urg_flags=0, mean_pkt_len=60.0 + i,
                      std_pkt_len=0.25, min_pkt_len=60.0, max_pkt_len=60.0 + 2 * i)
    return UniFlowRecord(key=FlowKey(src, BROKER, 40000 + i, 1883, 6), stats=stats, is_attack=int(attack),
                         traffic_class="MQTT_BF" if attack else "Benign")


def uniflow_table(n_benign: int = 12, n_attack: int = 8) -> FeatureTable:
    records = [uniflow(i, False) for i in range(n_benign)] + [uniflow(n_benign + i, True) for i in range(n_attack)]
    return FeatureTable.from_records(FeatureLevel.UNIFLOW, records, source="uniflow.csv")


def test_WHEN_table_written_and_read_THEN_equal():
    table = uniflow_table()
    buffer = StringIO()
    write_feature_csv(table, buffer)
    assert read_feature_csv(StringIO(buffer.getvalue())) == table


def test_WHEN_packet_table_written_THEN_header_has_29_features_and_labels(tmp_path):
    table = FeatureTable.from_records(FeatureLevel.PACKET, [extract_packet_features(PACKET, RULES)])
    path = tmp_path / "packet.csv"
    write_feature_csv(table, path)
    header, row = path.read_text().splitlines()
    assert len(header.split(",")) == 29 + 2
    assert header.startswith("ip_src,ip_dest,protocol,ttl,ip_len")
    assert row.endswith(",1,MQTT_BF")
    assert read_feature_csv(path) == table


def test_WHEN_leaky_columns_dropped_THEN_packet_table_keeps_19_features():
    table = FeatureTable.from_records(FeatureLevel.PACKET, [extract_packet_features(PACKET, RULES)])
    dropped = drop_leaky_columns(table)
    assert len(dropped.columns) == 19
    assert "ip_src" not in dropped.columns and "mqtt_flag_uname" not in dropped.columns
    assert "mqtt_messagetype" in dropped.columns
    assert len(drop_leaky_columns(table, drop_mqtt_scalars=True).columns) == 17
    assert dropped.matrix().shape == (1, 19)


def test_WHEN_flow_leaky_columns_dropped_THEN_only_addresses_removed():
    dropped = drop_leaky_columns(uniflow_table())
    assert dropped.columns[:3] == ["prt_src", "prt_dst", "proto"]
    assert len(dropped.columns) == 16
    with pytest.raises(MissingColumnException):
        drop_leaky_columns(dropped)


def test_WHEN_classifier_view_of_stripped_table_THEN_unchanged():
    dropped = drop_leaky_columns(uniflow_table())
    assert classifier_view(dropped) is dropped
    assert classifier_view(uniflow_table()) == dropped


def test_WHEN_text_columns_remain_THEN_matrix_refused():
    with pytest.raises(NonNumericColumnException):
        uniflow_table().matrix()


def test_WHEN_csv_has_is_attack_but_no_class_THEN_class_derived_from_rules():
    table = drop_leaky_columns(uniflow_table())
    buffer = StringIO()
    write_feature_csv(table, buffer)
    without_class = "\n".join(line.rsplit(",", 1)[0] for line in buffer.getvalue().splitlines()) + "\n"
    loaded = read_feature_csv(StringIO(without_class), RULES)
    assert list(loaded.labels) == list(table.labels)
    with pytest.raises(SchemaMismatchException):
        read_feature_csv(StringIO(without_class))


def test_WHEN_csv_header_unknown_THEN_schema_mismatch():
    with pytest.raises(SchemaMismatchException):
        read_feature_csv(StringIO("foo,bar,is_attack,class\n1,2,0,Benign\n"))
    with pytest.raises(SchemaMismatchException):
        read_feature_csv(StringIO(""))


def test_WHEN_csv_cell_not_numeric_THEN_schema_mismatch():
    buffer = StringIO()
    write_feature_csv(drop_leaky_columns(uniflow_table(2, 2)), buffer)
    lines = buffer.getvalue().splitlines()
    lines[1] = "x" + lines[1][lines[1].index(","):]
    with pytest.raises(SchemaMismatchException):
        read_feature_csv(StringIO("\n".join(lines)))


def test_WHEN_tables_concatenated_THEN_rows_stacked_in_order():
    first, second = uniflow_table(3, 2), uniflow_table(4, 3)
    combined = concat_tables([first, second])
    assert combined.n_rows == 12
    assert list(combined.labels) == list(first.labels) + list(second.labels)
    with pytest.raises(SchemaMismatchException):
        concat_tables([first, drop_leaky_columns(second)])


def test_WHEN_holdout_split_THEN_stratified_and_disjoint():
    table = drop_leaky_columns(uniflow_table(12, 8))
    train, test = split_holdout(table, 0.75, seed=7)
    assert (train.n_rows, test.n_rows) == (15, 5)
    assert train.class_counts() == {"Benign": 9, "MQTT_BF": 6}
    assert test.class_counts() == {"Benign": 3, "MQTT_BF": 2}
    train_ports = set(train.data["prt_src"].tolist())
    assert train_ports.isdisjoint(test.data["prt_src"].tolist())
    again, _ = split_holdout(table, 0.75, seed=7)
    assert again == train


def test_WHEN_class_has_single_row_THEN_split_refused():
    with pytest.raises(DegenerateSplitException):
        split_holdout(drop_leaky_columns(uniflow_table(5, 1)), 0.75, seed=0)
    with pytest.raises(ValueError):
        split_holdout(drop_leaky_columns(uniflow_table()), 1.0, seed=0)


def test_WHEN_standardized_THEN_train_columns_have_zero_mean_unit_variance():
    train, test = split_holdout(drop_leaky_columns(uniflow_table(40, 20)), 0.75, seed=1)
    standardizer, (scaled_train, scaled_test) = standardize(train, [test])
    matrix = scaled_train.matrix()
    varying = train.matrix().std(axis=0) > 0
    assert np.allclose(matrix.mean(axis=0), 0.0)
    assert np.allclose(matrix.std(axis=0)[varying], 1.0)
    assert np.allclose(matrix[:, ~varying], 0.0)
    assert np.allclose(scaled_test.matrix(), (test.matrix() - standardizer.mean) /
                       np.where(standardizer.std > 0, standardizer.std, 1.0))
    restored = Standardizer.from_dict(standardizer.to_dict())
    assert np.allclose(restored.transform_matrix(test.matrix()), scaled_test.matrix())
