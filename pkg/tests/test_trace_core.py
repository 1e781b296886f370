import json

import pytest
from hypothesis import given, settings

from shared.exceptions import MalformedAddress, MissingKey, NonMonotonicSeq, SchemaError, UnexpectedKey
from shared.utils import to_address, to_storage_key
from tests.builders import A, K1, access_lists, addr, random_hex_lists, slot, trace
from trace_core.codec import (
    decode_declared,
    decode_tal,
    decode_trace,
    encode_declared,
    encode_tal,
    encode_trace,
)
from trace_core.models import AccessList, DeclaredTal, EventKind
from trace_core.validation import first_touch_sets, validate_trace


def raw_trace(events):
    return {
        "ctx": {
            "tx_hash": "0x01",
            "sender": "0x51",
            "recipient": "0x52",
            "block_producer": "0xc0",
            "block_number": 1,
            "tx_index": 0,
        },
        "events": events,
    }


class TestValidateTrace:
    def test_well_formed_trace_is_returned_unchanged(self):
        t = trace(addr(A), slot(A, K1))
        assert validate_trace(t) == t

    def test_decoded_form_is_canonicalized(self):
        t = validate_trace(raw_trace([{"kind": "StorageRead", "address": "0xAA", "key": "0x1", "seq": 0}]))
        assert t.events[0].address == to_address(0xAA)
        assert t.events[0].key == to_storage_key(1)

    def test_repeated_seq_names_the_event(self):
        with pytest.raises(NonMonotonicSeq) as e:
            validate_trace(raw_trace([
                {"kind": "AddressAccess", "address": "0xaa", "seq": 1},
                {"kind": "AddressAccess", "address": "0xbb", "seq": 1},
            ]))
        assert e.value.index == 1

    def test_storage_event_needs_a_key(self):
        with pytest.raises(MissingKey):
            validate_trace(raw_trace([{"kind": "StorageRead", "address": "0xaa", "seq": 0}]))

    def test_address_event_must_not_carry_a_key(self):
        with pytest.raises(UnexpectedKey):
            validate_trace(raw_trace([{"kind": "AddressAccess", "address": "0xaa", "key": "0x1", "seq": 0}]))

    def test_malformed_address(self):
        with pytest.raises(MalformedAddress) as e:
            validate_trace(raw_trace([
                {"kind": "AddressAccess", "address": "0xaa", "seq": 0},
                {"kind": "AddressAccess", "address": "nothex", "seq": 1},
            ]))
        assert e.value.index == 1

    def test_bad_context_reports_a_json_path(self):
        raw = raw_trace([])
        raw["ctx"]["sender"] = "0xnope"
        with pytest.raises(SchemaError) as e:
            validate_trace(raw)
        assert e.value.path == "$.ctx.sender"


class TestFirstTouchSets:
    def test_empty_trace(self):
        touched = first_touch_sets(trace())
        assert touched.accessed_addresses == frozenset()
        assert touched.accessed_storage_keys == frozenset()

    def test_set_semantics(self):
        touched = first_touch_sets(trace(addr(A), slot(A, K1), slot(A, K1)))
        assert touched.accessed_addresses == {A}
        assert touched.accessed_storage_keys == {(A, K1)}

    def test_storage_event_touches_its_address(self):
        touched = first_touch_sets(trace(slot(A, K1, write=True)))
        assert touched.accessed_addresses == {A}


class TestTalCodec:
    def test_empty_list(self):
        assert encode_tal(AccessList()) == "[]"

    def test_wire_format(self):
        encoded = encode_tal(AccessList.of([("0x01", ["0x02"])]))
        assert encoded == (
            '[{"address":"0x0000000000000000000000000000000000000001",'
            '"storageKeys":["0x0000000000000000000000000000000000000000000000000000000000000002"]}]'
        )

    @given(access_lists())
    @settings(max_examples=1000, deadline=None)
    def test_decode_inverts_encode(self, tal):
        encoded = encode_tal(tal)
        assert decode_tal(encoded) == tal
        assert encode_tal(decode_tal(encoded)) == encoded

    @given(random_hex_lists)
    @settings(max_examples=1000, deadline=None)
    def test_encoding_is_byte_stable(self, pairs):
        first = encode_tal(AccessList.of(pairs))
        assert encode_tal(decode_tal(first)) == first

    def test_duplicates_survive(self):
        tal = AccessList.of([(A, [K1]), (A, [K1])])
        assert decode_tal(encode_tal(tal)) == tal

    @pytest.mark.parametrize("text, path", [
        ("{", "$"),
        (f'[{{"address":"{A}"}}]', "$[0].storageKeys"),
        ('[{"address":"0xgg","storageKeys":[]}]', "$[0].address"),
        ('[{"address":"0x1234","storageKeys":[]}]', "$[0].address"),
        (f'[{{"address":"{A}","storageKeys":["0x1"]}}]', "$[0].storageKeys[0]"),
        (f'[{{"address":"{A}","storageKeys":["{K1}"],"extra":1}}]', "$[0].extra"),
    ])
    def test_schema_errors_carry_a_path(self, text, path):
        with pytest.raises(SchemaError) as e:
            decode_tal(text)
        assert e.value.path == path

    def test_full_width_mixed_case_is_lowered(self):
        text = json.dumps([{"address": "0x" + A[2:].upper(), "storageKeys": [K1]}])
        assert decode_tal(text) == AccessList.of([(A, [K1])])


class TestTraceCodec:
    def test_round_trip(self):
        t = trace(addr(A), slot(A, K1, write=True))
        line = encode_trace(t)
        assert "\n" not in line
        assert decode_trace(line) == t
        assert encode_trace(decode_trace(line)) == line

    def test_bad_line_carries_line_number(self):
        with pytest.raises(SchemaError) as e:
            decode_trace("{not json", line=2)
        assert e.value.line == 2

    def test_trace_error_becomes_schema_error_on_a_line(self):
        raw = raw_trace([{"kind": "StorageRead", "address": "0xaa", "seq": 0}])
        with pytest.raises(SchemaError) as e:
            decode_trace(json.dumps(raw), line=5)
        assert e.value.line == 5


class TestDeclaredCodec:
    def test_absent_and_empty_lists_stay_distinct(self):
        absent = DeclaredTal(tx_hash="0x1", block_number=1, tx_index=0, access_list=None)
        empty = DeclaredTal(tx_hash="0x1", block_number=1, tx_index=0, access_list=AccessList())
        assert decode_declared(encode_declared(absent)).access_list is None
        assert decode_declared(encode_declared(empty)).access_list == AccessList()

    def test_nested_error_path(self):
        text = '{"tx_hash":"0x1","block_number":1,"tx_index":0,"access_list":[{"address":1}]}'
        with pytest.raises(SchemaError) as e:
            decode_declared(text, line=3)
        assert e.value.line == 3
        assert e.value.path.startswith("$.access_list[0]")


def test_event_kind_storage_flag():
    assert EventKind.STORAGE_WRITE.is_storage
    assert not EventKind.ADDRESS_ACCESS.is_storage
