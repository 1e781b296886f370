import json

import httpx
import pytest

from ingestion.client import RpcClient
from ingestion.config import IngestionConfig
from ingestion.corpus import Corpus, CorpusWriter, load_corpus, load_declared, store_corpus, store_declared
from ingestion.fetcher import NodeFetcher, call_object, parse_block, parse_receipt
from ingestion.models import NodeEndpoint, RawTraceDocument, TraceMode
from ingestion.normalizer import OpcodeMap, created_from_call_frames, normalize_prestate, normalize_struct_logs
from shared.exceptions import (
    ConfigError, CorpusIOError, NormalizationError, NotFound, RpcError, SchemaError, TracerUnsupported,
)
from shared.utils import to_address
from tests.builders import A, B, C, CREATED, K1, K2, K3, PRODUCER, RECIPIENT, SENDER, addr, ctx, slot, tal, trace
from tests.fake_node import FakeNode, rpc_error, rpc_result
from trace_core.models import AccessList, DeclaredTal, EventKind, StateLabel

ENDPOINT = NodeEndpoint(url="http://node.test")
TX0 = "0x" + "01" * 32
TX1 = "0x" + "02" * 32
PARENT_PRODUCER = to_address("0x" + "c1" * 20)
STALE_TARGET = to_address("0x" + "ee" * 20)


def events(t):
    return [(event.kind, event.address, event.key) for event in t.events]


@pytest.fixture
def node_data(load_fixture):
    return load_fixture("node-block-100.json")


def fetcher_for(node, tracer="prestateTracer"):
    config = IngestionConfig(url=ENDPOINT.url, tracer=tracer, retry_backoff=0)
    client = RpcClient(config.endpoint(), retry_backoff=0, transport=httpx.MockTransport(node))
    return NodeFetcher(client, config)


class TestRpcClient:
    @pytest.mark.asyncio
    async def test_returns_result(self):
        async with RpcClient(ENDPOINT, transport=httpx.MockTransport(lambda r: rpc_result(r, "0x64"))) as client:
            assert await client.call("eth_blockNumber", []) == "0x64"

    @pytest.mark.asyncio
    async def test_retries_unavailable_node(self):
        attempts = []

        def handler(request):
            attempts.append(request)
            if len(attempts) < 3:
                return httpx.Response(503)
            return rpc_result(request, "ok")

        async with RpcClient(ENDPOINT, max_retries=3, retry_backoff=0, transport=httpx.MockTransport(handler)) as client:
            assert await client.call("eth_chainId", []) == "ok"
        assert len(attempts) == 3

    @pytest.mark.asyncio
    async def test_gives_up_after_max_retries(self):
        attempts = []

        def handler(request):
            attempts.append(request)
            return httpx.Response(429)

        async with RpcClient(ENDPOINT, max_retries=2, retry_backoff=0, transport=httpx.MockTransport(handler)) as client:
            with pytest.raises(RpcError) as excinfo:
                await client.call("eth_chainId", [])
        assert len(attempts) == 3
        assert excinfo.value.method == "eth_chainId"

    @pytest.mark.asyncio
    async def test_retries_transport_errors(self):
        attempts = []

        def handler(request):
            attempts.append(request)
            if len(attempts) == 1:
                raise httpx.ConnectError("connection refused", request=request)
            return rpc_result(request, "0x1")

        async with RpcClient(ENDPOINT, retry_backoff=0, transport=httpx.MockTransport(handler)) as client:
            assert await client.call("eth_chainId", []) == "0x1"
        assert len(attempts) == 2

    @pytest.mark.asyncio
    async def test_client_errors_are_not_retried(self):
        attempts = []

        def handler(request):
            attempts.append(request)
            return httpx.Response(400)

        async with RpcClient(ENDPOINT, retry_backoff=0, transport=httpx.MockTransport(handler)) as client:
            with pytest.raises(RpcError):
                await client.call("eth_chainId", [])
        assert len(attempts) == 1

    @pytest.mark.asyncio
    async def test_error_object_carries_code(self):
        transport = httpx.MockTransport(lambda r: rpc_error(r, -32601, "method not found"))
        async with RpcClient(ENDPOINT, transport=transport) as client:
            with pytest.raises(RpcError) as excinfo:
                await client.call("debug_traceTransaction", [TX0, {}])
        assert excinfo.value.code == -32601

    @pytest.mark.asyncio
    @pytest.mark.parametrize("response", [
        httpx.Response(200, content=b"<html>proxy error</html>"),
        httpx.Response(200, json=[1, 2]),
    ])
    async def test_malformed_bodies(self, response):
        async with RpcClient(ENDPOINT, transport=httpx.MockTransport(lambda r: response)) as client:
            with pytest.raises(RpcError):
                await client.call("eth_chainId", [])


class TestIngestionConfig:
    def test_endpoint_requires_url(self, monkeypatch):
        monkeypatch.delenv("RPC_URL", raising=False)
        with pytest.raises(ConfigError):
            IngestionConfig().endpoint()

    def test_reads_prefixed_environment(self, monkeypatch):
        monkeypatch.setenv("RPC_URL", "http://localhost:8545")
        monkeypatch.setenv("RPC_MAX_CONCURRENT_REQUESTS", "2")
        monkeypatch.setenv("RPC_TRACER", "structLogs")
        config = IngestionConfig()
        assert config.tracer == "structLogs"
        assert config.endpoint() == NodeEndpoint(url="http://localhost:8545", max_concurrent_requests=2)

    def test_flag_url_wins(self, monkeypatch):
        monkeypatch.setenv("RPC_URL", "http://localhost:8545")
        assert IngestionConfig().endpoint("https://other.test").url == "https://other.test"


class TestParsing:
    def test_block(self, node_data):
        block = parse_block(node_data["block"], 100)
        assert block.header.number == 100
        assert block.header.miner == PRODUCER
        assert block.header.timestamp == int("0x6078d1c7", 16)
        legacy, typed = block.transactions
        assert legacy.declared_tal is None
        assert legacy.tx_type == 0
        assert typed.tx_type == 1
        assert typed.declared_tal == tal((B, [K2]), (RECIPIENT, []))

    def test_empty_access_list_is_not_absent(self, node_data):
        raw = json.loads(json.dumps(node_data["block"]))
        raw["transactions"][0]["accessList"] = []
        assert parse_block(raw, 100).transactions[0].declared_tal == AccessList()

    def test_bad_access_list_entry(self, node_data):
        raw = json.loads(json.dumps(node_data["block"]))
        raw["transactions"][1]["accessList"][0]["address"] = "0x1234"
        with pytest.raises(SchemaError) as excinfo:
            parse_block(raw, 100)
        assert excinfo.value.path == "$.transactions[1].accessList[0].address"

    def test_hash_only_block_is_rejected(self, node_data):
        raw = {**node_data["block"], "transactions": [TX0]}
        with pytest.raises(SchemaError):
            parse_block(raw, 100)

    def test_receipt(self, node_data):
        receipt = parse_receipt(node_data["receipts"][TX0], TX0)
        assert receipt.gas_used == 50_000
        assert receipt.effective_gas_price == 1_000_000_000
        assert receipt.contract_address is None

    def test_missing_receipt(self):
        with pytest.raises(NotFound):
            parse_receipt(None, TX0)

    def test_call_object_replays_access_list(self, node_data):
        typed = parse_block(node_data["block"], 100).transactions[1]
        call = call_object(typed)
        assert call["from"] == SENDER
        assert call["to"] == RECIPIENT
        assert call["accessList"] == [
            {"address": B, "storageKeys": [K2]},
            {"address": RECIPIENT, "storageKeys": []},
        ]


class TestOpcodeMap:
    def test_default_map(self):
        opcodes = OpcodeMap()
        assert opcodes.fork == "berlin"
        assert opcodes.address_opcodes["EXTCODEHASH"] == -1
        assert opcodes.call_opcodes["DELEGATECALL"] == (-2, False)
        assert opcodes.call_opcodes["STATICCALL"] == (-2, True)
        assert opcodes.storage_opcodes["SSTORE"] == (-1, EventKind.STORAGE_WRITE)
        assert opcodes.create_opcodes == frozenset({"CREATE", "CREATE2"})

    def test_missing_map(self, tmp_path):
        with pytest.raises(ConfigError):
            OpcodeMap(tmp_path / "absent.json")

    def test_invalid_map(self, tmp_path):
        path = tmp_path / "map.json"
        path.write_text(json.dumps({"schema_version": "1.0", "fork": "berlin"}))
        with pytest.raises(ConfigError):
            OpcodeMap(path)


class TestNormalizer:
    def test_prestate_drops_producer_without_storage(self, node_data):
        doc = RawTraceDocument(tx_hash=TX0, tracer_name="prestateTracer", payload=node_data["prestateTracer"][TX0])
        t = normalize_prestate(doc, ctx(), StateLabel.IBS, skip_addresses=[PRODUCER])
        assert events(t) == [
            (EventKind.ADDRESS_ACCESS, SENDER, None),
            (EventKind.ADDRESS_ACCESS, RECIPIENT, None),
            (EventKind.STORAGE_READ, RECIPIENT, K1),
            (EventKind.ADDRESS_ACCESS, A, None),
        ]

    def test_prestate_keeps_producer_with_storage(self, node_data):
        payload = node_data["startOfBlock"]["prestateTracer"][TX1]
        doc = RawTraceDocument(tx_hash=TX1, tracer_name="prestateTracer", payload=payload)
        t = normalize_prestate(doc, ctx(1), StateLabel.SOB, skip_addresses=[PRODUCER, PARENT_PRODUCER])
        assert (EventKind.STORAGE_READ, PRODUCER, K1) in events(t)
        assert PARENT_PRODUCER not in {event.address for event in t.events}
        assert t.state_label is StateLabel.SOB

    @pytest.mark.parametrize("payload", [[1, 2], {"0xzz": {}}, {SENDER: {"storage": ["0x1"]}}])
    def test_prestate_rejects_malformed_output(self, payload):
        doc = RawTraceDocument(tx_hash=TX0, tracer_name="prestateTracer", payload=payload)
        with pytest.raises(NormalizationError) as excinfo:
            normalize_prestate(doc, ctx(), StateLabel.IBS)
        assert excinfo.value.raw == payload

    def test_created_from_call_frames(self, node_data):
        doc = RawTraceDocument(tx_hash=TX0, tracer_name="callTracer", payload=node_data["callTracer"][TX0])
        assert created_from_call_frames(doc) == (CREATED,)

    def test_struct_logs(self, node_data):
        doc = RawTraceDocument(tx_hash=TX0, tracer_name="structLogs", payload=node_data["structLogs"][TX0])
        t = normalize_struct_logs(doc, ctx(), StateLabel.IBS, OpcodeMap())
        assert events(t) == [
            (EventKind.STORAGE_READ, RECIPIENT, K1),
            (EventKind.ADDRESS_ACCESS, A, None),
            (EventKind.ADDRESS_ACCESS, B, None),
            (EventKind.STORAGE_READ, B, K2),
            (EventKind.ADDRESS_ACCESS, C, None),
            (EventKind.STORAGE_WRITE, RECIPIENT, K3),
            (EventKind.STORAGE_READ, CREATED, K1),
        ]
        assert t.ctx.created_contracts == (CREATED,)

    def test_struct_logs_failed_create_with_storage(self, node_data):
        doc = RawTraceDocument(tx_hash=TX1, tracer_name="structLogs", payload=node_data["structLogs"][TX1])
        with pytest.raises(NormalizationError):
            normalize_struct_logs(doc, ctx(1), StateLabel.IBS, OpcodeMap())

    @pytest.mark.parametrize("steps", [
        [{"op": "BALANCE", "depth": 1, "stack": []}],
        [{"op": "STOP", "depth": 1}, {"op": "STOP", "depth": 3}],
        [{"op": "SLOAD", "stack": ["0x1"]}],
    ])
    def test_struct_logs_rejects_malformed_steps(self, steps):
        doc = RawTraceDocument(tx_hash=TX0, tracer_name="structLogs", payload={"structLogs": steps})
        with pytest.raises(NormalizationError):
            normalize_struct_logs(doc, ctx(), StateLabel.IBS, OpcodeMap())

    def test_struct_logs_missing(self):
        doc = RawTraceDocument(tx_hash=TX0, tracer_name="structLogs", payload={"failed": False})
        with pytest.raises(NormalizationError):
            normalize_struct_logs(doc, ctx(), StateLabel.IBS, OpcodeMap())


class TestNodeFetcher:
    @pytest.mark.asyncio
    async def test_block_bundle_on_block_state(self, node_data):
        node = FakeNode(node_data)
        fetcher = fetcher_for(node)
        async with fetcher.client:
            bundle = await fetcher.fetch_block_bundle(100)

        assert bundle.block_number == 100
        assert bundle.timestamp == int("0x6078d1c7", 16)
        assert bundle.skipped == ()
        first, second = bundle.traces
        assert first.tx_hash == TX0
        assert first.ctx.created_contracts == (CREATED,)
        assert first.ctx.effective_gas_price == 1_000_000_000
        assert first.ctx.block_producer == PRODUCER
        assert events(first) == [
            (EventKind.ADDRESS_ACCESS, SENDER, None),
            (EventKind.ADDRESS_ACCESS, RECIPIENT, None),
            (EventKind.STORAGE_READ, RECIPIENT, K1),
            (EventKind.ADDRESS_ACCESS, A, None),
        ]
        assert (EventKind.STORAGE_READ, B, K2) in events(second)
        assert (EventKind.STORAGE_READ, PRODUCER, K1) in events(second)
        assert bundle.declared == (
            DeclaredTal(tx_hash=TX0, block_number=100, tx_index=0, access_list=None),
            DeclaredTal(tx_hash=TX1, block_number=100, tx_index=1, access_list=tal((B, [K2]), (RECIPIENT, []))),
        )
        methods = {method for method, _ in node.calls}
        assert "debug_traceCall" not in methods

    @pytest.mark.asyncio
    async def test_start_of_block_traces_on_parent_state(self, node_data):
        node = FakeNode(node_data)
        fetcher = fetcher_for(node)
        async with fetcher.client:
            bundle = await fetcher.fetch_block_bundle(100, modes=(TraceMode.IBS, TraceMode.SOB), tx_hashes={TX1})

        assert [(t.tx_hash, t.state_label) for t in bundle.traces] == [(TX1, StateLabel.IBS), (TX1, StateLabel.SOB)]
        sob = bundle.traces[1]
        assert PARENT_PRODUCER not in {event.address for event in sob.events}
        trace_calls = [params for method, params in node.calls if method == "debug_traceCall"]
        assert trace_calls and all(params[1] == "0x63" for params in trace_calls)
        assert all(params[0]["accessList"] for params in trace_calls)

    @pytest.mark.asyncio
    async def test_falls_back_to_struct_logs(self, node_data):
        node = FakeNode(node_data, unsupported={"prestateTracer"})
        fetcher = fetcher_for(node)
        async with fetcher.client:
            bundle = await fetcher.fetch_block_bundle(100)

        assert fetcher.tracer == "structLogs"
        assert [t.tx_hash for t in bundle.traces] == [TX0]
        assert (EventKind.STORAGE_WRITE, RECIPIENT, K3) in events(bundle.traces[0])
        assert [(s.tx_hash, s.block_number) for s in bundle.skipped] == [(TX1, 100)]
        assert [row.tx_hash for row in bundle.declared] == [TX0]

    @pytest.mark.asyncio
    async def test_created_contracts_without_call_tracer(self, node_data):
        node = FakeNode(node_data, unsupported={"callTracer"})
        fetcher = fetcher_for(node)
        async with fetcher.client:
            bundle = await fetcher.fetch_block_bundle(100, tx_hashes={TX0})
        assert bundle.traces[0].ctx.created_contracts == ()

    @pytest.mark.asyncio
    async def test_node_without_debug_methods(self, node_data):
        node = FakeNode(node_data, missing_methods={"debug_traceTransaction"})
        fetcher = fetcher_for(node)
        async with fetcher.client:
            with pytest.raises(TracerUnsupported):
                await fetcher.fetch_block_bundle(100)

    @pytest.mark.asyncio
    async def test_fetch_trace_by_hash(self, node_data):
        fetcher = fetcher_for(FakeNode(node_data), tracer="structLogs")
        async with fetcher.client:
            t = await fetcher.fetch_trace(TX0, TraceMode.IBS)
        assert t.ctx.tx_index == 0
        assert t.ctx.block_number == 100
        assert (EventKind.STORAGE_READ, CREATED, K1) in events(t)

    @pytest.mark.asyncio
    async def test_read_target_depends_on_an_earlier_transaction(self, node_data):
        fetcher = fetcher_for(FakeNode(node_data))
        async with fetcher.client:
            in_block = await fetcher.fetch_trace(TX1, TraceMode.IBS)
            start_of_block = await fetcher.fetch_trace(TX1, TraceMode.SOB)
        assert start_of_block.state_label is StateLabel.SOB
        assert STALE_TARGET in {event.address for event in start_of_block.events}
        assert STALE_TARGET not in {event.address for event in in_block.events}
        assert (EventKind.STORAGE_READ, B, K2) in events(in_block)
        assert (EventKind.STORAGE_READ, B, K2) not in events(start_of_block)
        assert PARENT_PRODUCER not in {event.address for event in start_of_block.events}

    @pytest.mark.asyncio
    async def test_unknown_transaction(self, node_data):
        fetcher = fetcher_for(FakeNode(node_data))
        async with fetcher.client:
            with pytest.raises(NotFound):
                await fetcher.fetch_trace("0x" + "09" * 32, TraceMode.IBS)

    @pytest.mark.asyncio
    async def test_unknown_block(self, node_data):
        fetcher = fetcher_for(FakeNode(node_data))
        async with fetcher.client:
            with pytest.raises(NotFound):
                await fetcher.fetch_block_bundle(5)


def _three_traces():
    return [
        trace(addr(A), slot(A, K1), context=ctx(0)),
        trace(addr(RECIPIENT), context=ctx(1)),
        trace(slot(B, K2, write=True), addr(C), context=ctx(2, block_number=101, tx_index=0)),
    ]


class TestCorpus:
    def test_empty_round_trip(self, tmp_path):
        path = tmp_path / "traces.ndjson"
        assert store_corpus(path, []) == 0
        assert path.read_bytes() == b""
        assert list(load_corpus(path)) == []

    def test_round_trip_is_byte_stable(self, tmp_path):
        first, second = tmp_path / "first.ndjson", tmp_path / "second.ndjson"
        assert store_corpus(first, _three_traces()) == 3
        loaded = list(load_corpus(first))
        assert loaded == _three_traces()
        store_corpus(second, loaded)
        assert first.read_bytes() == second.read_bytes()
        assert first.read_bytes().count(b"\n") == 3

    def test_bad_line_reports_its_number(self, tmp_path):
        path = tmp_path / "traces.ndjson"
        store_corpus(path, _three_traces())
        lines = path.read_text().splitlines()
        lines[1] = lines[1][:40]
        path.write_text("\n".join(lines) + "\n")
        loaded = load_corpus(path)
        next(loaded)
        with pytest.raises(SchemaError) as excinfo:
            next(loaded)
        assert excinfo.value.line == 2

    def test_declared_round_trip(self, tmp_path):
        path = tmp_path / "declared.ndjson"
        rows = [
            DeclaredTal(tx_hash=ctx(0).tx_hash, block_number=100, tx_index=0),
            DeclaredTal(tx_hash=ctx(1).tx_hash, block_number=100, tx_index=1, access_list=AccessList()),
            DeclaredTal(tx_hash=ctx(2).tx_hash, block_number=100, tx_index=2, access_list=tal((A, [K1]))),
        ]
        store_declared(path, rows)
        assert list(load_declared(path)) == rows

    def test_out_of_order_traces(self, make_corpus):
        traces = _three_traces()
        root = make_corpus([traces[2], traces[0]])
        with pytest.raises(SchemaError) as excinfo:
            list(Corpus(root).traces())
        assert excinfo.value.line == 2

    def test_blocks_pair_traces_with_declared_rows(self, make_corpus):
        traces = _three_traces()
        declared = [DeclaredTal(tx_hash=traces[2].tx_hash, block_number=101, tx_index=0, access_list=tal((B, [K2])))]
        blocks = list(Corpus(make_corpus(traces, declared)).blocks())
        assert [(number, len(block_traces), len(rows)) for number, block_traces, rows in blocks] == [
            (100, 2, 0), (101, 1, 1),
        ]

    def test_missing_traces_file(self, tmp_path):
        with pytest.raises(CorpusIOError):
            list(Corpus(tmp_path).traces())

    def test_writer_appends_blocks(self, tmp_path):
        traces = _three_traces()
        with CorpusWriter(tmp_path / "out") as writer:
            writer.write(traces[:2], [])
            writer.write(traces[2:], [DeclaredTal(tx_hash=traces[2].tx_hash, block_number=101, tx_index=0)])
        corpus = Corpus(tmp_path / "out")
        assert list(corpus.traces()) == traces
        assert writer.n_traces == 3
        assert writer.n_declared == 1
