import pytest

from rolekit.engine import (
    CHAT_TEMPERATURE,
    CHAT_TOP_P,
    EngineConfig,
    RoleplayEngine,
    assemble_system_prompt,
)
from rolekit.errors import SessionNotFoundError, TransportError, ValidationError
from rolekit.gateway import Gateway, GatewayConfig, mock_gateway
from rolekit.pipeline import load_template
from rolekit.retrieval import QueryResult, RetrievalIndex


@pytest.fixture()
def profile_map(profiles):
    return {p.role_name: p for p in profiles}


@pytest.fixture()
def engine(profile_map, gw):
    return RoleplayEngine(gw, profile_map)


@pytest.fixture()
def engine_with_index(profile_map, clean_corpus, gw):
    index = RetrievalIndex.build(profile_map["蒋飞"], clean_corpus, gw, chunk_size=40, overlap=10)
    return RoleplayEngine(gw, profile_map, indices={"蒋飞": index})


class TestEngineConfig:
    def test_defaults(self):
        cfg = EngineConfig()
        assert cfg.retrieval_k == 3
        assert cfg.max_history_turns == 10
        assert cfg.temperature == CHAT_TEMPERATURE == 0.95
        assert cfg.top_p == CHAT_TOP_P == 0.7

    def test_bounds(self):
        with pytest.raises(ValidationError):
            EngineConfig(retrieval_k=-1)
        with pytest.raises(ValidationError):
            EngineConfig(max_history_turns=-1)


class TestSystemPrompt:
    def test_without_retrieval_no_memory_block(self, profiles):
        template = load_template("GeneralResponse")
        prompt = assemble_system_prompt(template, profiles[0])
        assert profiles[0].role_name in prompt
        assert profiles[0].role_description in prompt
        assert "Relevant memories:" not in prompt

    def test_with_retrieval_lists_chunks_in_order(self, profiles):
        template = load_template("GeneralResponse")
        retrieved = [
            QueryResult("c1", 0.9, "第一段记忆"),
            QueryResult("c2", 0.8, "第二段记忆"),
        ]
        prompt = assemble_system_prompt(template, profiles[0], retrieved)
        block = prompt.split("Relevant memories:\n", 1)[1]
        assert block == "- 第一段记忆\n- 第二段记忆"


class TestSessions:
    def test_create_get_delete(self, engine):
        session = engine.create_session("蒋飞")
        assert len(session.session_id) == 32  # 16 random bytes, hex
        assert engine.get_session(session.session_id) is session
        engine.delete_session(session.session_id)
        with pytest.raises(SessionNotFoundError):
            engine.get_session(session.session_id)
        with pytest.raises(SessionNotFoundError):
            engine.delete_session(session.session_id)

    def test_unknown_role_rejected(self, engine):
        with pytest.raises(SessionNotFoundError, match="unknown role"):
            engine.create_session("路人甲")

    def test_ids_are_unique(self, engine):
        ids = {engine.create_session("蒋飞").session_id for _ in range(50)}
        assert len(ids) == 50

    def test_list_roles_sorted(self, engine, profiles):
        roles = engine.list_roles()
        assert [p.role_name for p in roles] == sorted(p.role_name for p in profiles)

    def test_engine_requires_profiles(self, gw):
        with pytest.raises(ValidationError):
            RoleplayEngine(gw, {})


class TestTurns:
    def test_turn_appends_history_and_reports_trace(self, engine_with_index):
        session = engine_with_index.create_session("蒋飞")
        reply, trace = engine_with_index.take_turn(session.session_id, "你好啊")
        assert reply
        assert session.history == [("你好啊", reply)]
        assert len(trace.retrieved) == 3
        assert trace.temperature == CHAT_TEMPERATURE
        assert trace.top_p == CHAT_TOP_P
        assert "Relevant memories:" in trace.prompt_rendered
        for r in trace.retrieved:
            assert f"- {r.text}" in trace.prompt_rendered

    def test_turn_without_index_has_no_retrieval(self, engine):
        session = engine.create_session("蒋飞")
        _, trace = engine.take_turn(session.session_id, "你好")
        assert trace.retrieved == ()
        assert "Relevant memories:" not in trace.prompt_rendered

    def test_retrieval_k_zero_disables_retrieval(self, profile_map, clean_corpus, gw):
        index = RetrievalIndex.build(profile_map["蒋飞"], clean_corpus, gw)
        engine = RoleplayEngine(
            gw, profile_map, indices={"蒋飞": index}, config=EngineConfig(retrieval_k=0)
        )
        session = engine.create_session("蒋飞")
        _, trace = engine.take_turn(session.session_id, "你好")
        assert trace.retrieved == ()

    def test_history_trimmed_to_max(self, profile_map, gw):
        engine = RoleplayEngine(gw, profile_map, config=EngineConfig(max_history_turns=2))
        session = engine.create_session("蒋飞")
        for i in range(5):
            engine.take_turn(session.session_id, f"第{i}句")
        assert len(session.history) == 2
        assert session.history[0][0] == "第3句"
        assert session.history[1][0] == "第4句"

    def test_per_session_override(self, engine):
        session = engine.create_session("蒋飞", max_history_turns=1)
        engine.take_turn(session.session_id, "一")
        engine.take_turn(session.session_id, "二")
        assert len(session.history) == 1
        assert session.history[0][0] == "二"

    def test_history_carried_into_prompt(self, profile_map):
        captured = []

        class Recorder:
            model_id = "recorder"

            def complete(self, request, sample_key=""):
                captured.append(request)
                return f"回{len(captured)}", {}

        engine = RoleplayEngine(
            Gateway(chat_provider=Recorder(), config=GatewayConfig()), profile_map
        )
        session = engine.create_session("蒋飞")
        engine.take_turn(session.session_id, "先问一句")
        engine.take_turn(session.session_id, "再问一句")
        assert captured[1].messages == (
            ("user", "先问一句"),
            ("assistant", "回1"),
            ("user", "再问一句"),
        )

    def test_failed_turn_leaves_history_untouched(self, profile_map, gw):
        flaky_calls = []

        class Flaky:
            model_id = "flaky"

            def complete(self, request, sample_key=""):
                flaky_calls.append(1)
                if len(flaky_calls) == 2:
                    raise TransportError("mid-conversation outage")
                return "好的", {}

        engine = RoleplayEngine(
            Gateway(chat_provider=Flaky(), config=GatewayConfig()), profile_map
        )
        session = engine.create_session("蒋飞")
        engine.take_turn(session.session_id, "第一句")
        before = list(session.history)
        with pytest.raises(TransportError):
            engine.take_turn(session.session_id, "第二句")
        assert session.history == before
        # and the session still works afterwards
        reply, _ = engine.take_turn(session.session_id, "第三句")
        assert reply == "好的"
        assert len(session.history) == 2

    def test_empty_user_text_rejected(self, engine):
        session = engine.create_session("蒋飞")
        with pytest.raises(ValidationError):
            engine.take_turn(session.session_id, "   ")
        assert session.history == []

    def test_unknown_session_rejected(self, engine):
        with pytest.raises(SessionNotFoundError):
            engine.take_turn("deadbeef", "你好")


class TestRunScript:
    def test_full_script_transcript_format(self, engine):
        session = engine.create_session("老王")
        result = engine.run_script(session.session_id, ["第一问", "第二问"])
        assert result.error_index is None and result.error is None
        assert len(result.exchanges) == 2
        lines = result.transcript.splitlines()
        assert lines[0] == "Q1: 第一问"
        assert lines[1].startswith("老王: ")
        assert lines[2] == "Q2: 第二问"
        assert lines[3].startswith("老王: ")

    def test_partial_script_reports_error_index(self, profile_map):
        calls = []

        class DiesOnSecond:
            model_id = "dies"

            def complete(self, request, sample_key=""):
                calls.append(1)
                if len(calls) >= 2:
                    raise TransportError("outage")
                return "回答", {}

        engine = RoleplayEngine(
            Gateway(chat_provider=DiesOnSecond(), config=GatewayConfig()), profile_map
        )
        session = engine.create_session("蒋飞")
        result = engine.run_script(session.session_id, ["一", "二", "三"])
        assert result.error_index == 1
        assert "outage" in result.error
        assert len(result.exchanges) == 1
        assert result.transcript == f"Q1: 一\n蒋飞: {result.exchanges[0][1]}"


class TestSnapshots:
    def test_save_load_roundtrip(self, profile_map, gw, tmp_path):
        engine = RoleplayEngine(gw, profile_map)
        s1 = engine.create_session("蒋飞")
        engine.take_turn(s1.session_id, "你好")
        s2 = engine.create_session("老王")
        path = tmp_path / "sessions.jsonl"
        engine.save_sessions(path)

        fresh = RoleplayEngine(mock_gateway(seed=42), profile_map)
        assert fresh.load_sessions(path) == 2
        restored = fresh.get_session(s1.session_id)
        assert restored.role_name == "蒋飞"
        assert restored.history == s1.history
        assert fresh.get_session(s2.session_id).role_name == "老王"
        # restored sessions accept new turns
        reply, _ = fresh.take_turn(s1.session_id, "还记得我吗")
        assert reply

    def test_load_skips_unknown_roles(self, profile_map, gw, tmp_path):
        engine = RoleplayEngine(gw, profile_map)
        engine.create_session("蒋飞")
        path = tmp_path / "sessions.jsonl"
        engine.save_sessions(path)

        only_one = {"老王": profile_map["老王"]}
        fresh = RoleplayEngine(mock_gateway(), only_one)
        assert fresh.load_sessions(path) == 0
