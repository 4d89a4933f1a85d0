#!/usr/bin/env python3
"""Regenerate the bundled mini corpus under tests/data/mini/.

Produces two listings (x86-64 at O0 and O3, 55 functions each), one recorded
feature-document fixture per function under the default extraction prompt,
the cross-optimization pairs file, and the committed evaluation report that
the end-to-end pipeline must reproduce byte for byte.

Everything is derived from a fixed seed; rerunning the script rewrites
identical bytes. Rerun it after changing the prompt assets, the prompt
builder, or the listing synthesis (fixture keys depend on prompt bytes).
"""

from __future__ import annotations

import json
import random
import shutil
import sys
from pathlib import Path

from asmsieve import cli
from asmsieve.corpus import build_pairs, filter_short, parse_listing, save_pairs, truncate
from asmsieve.fixtures import FixtureStore, prompt_sha256
from asmsieve.prompts import PromptConfig, build_prompt, load_example_bank
from asmsieve.schema import ALGO_CATEGORIES, OPERATION_CATEGORIES, validate
from asmsieve.static_analysis import static_extract

SEED = 20260811
LIBRARY = "miniapp"
ROOT = Path(__file__).resolve().parent.parent / "tests" / "data" / "mini"

SYMBOLS = [
    "crc32_update", "md5_block", "sha1_round", "adler32_step", "fnv1a_mix",
    "hex_encode", "hex_decode", "base64_pad", "utf8_decode", "utf16_swap",
    "buf_append", "buf_reserve", "buf_clear", "buf_compare", "buf_find_byte",
    "str_casecmp", "str_tokenize", "str_trim", "str_hash", "str_rot13",
    "list_push", "list_pop", "list_reverse", "tree_insert", "tree_height",
    "queue_drain", "ring_put", "ring_get", "heap_sift_up", "heap_sift_down",
    "cfg_parse_line", "cfg_lookup", "cfg_dump", "env_expand", "path_join",
    "io_read_block", "io_write_block", "io_flush", "sock_set_opt", "pipe_relay",
    "mem_pool_grab", "mem_pool_free", "arena_reset", "slab_carve", "page_align",
    "rng_next", "rng_seed", "clock_delta", "ticks_to_ms", "checksum_fold",
    "table_rehash", "table_probe", "bitmap_set", "bitmap_scan", "varint_read",
]

_BOOL_FIELDS = (
    "jump_table", "string_literals", "mutates_inputs", "mutates_globals",
    "mem_alloc", "io_ops", "block_mem_ops", "error_handling",
)

_FLOAT_POOL = ("0.5", "1.5", "2.0", "0.0625", "100.0")


class _Addr:
    """Monotone pseudo-addresses with instruction-sized strides."""

    def __init__(self, rng: random.Random, base: int):
        self.rng = rng
        self.value = base

    def next(self) -> int:
        current = self.value
        self.value += self.rng.choice((2, 3, 4, 5, 7))
        return current


def _emit(lines: list[str], addr: _Addr, text: str) -> int:
    a = addr.next()
    lines.append(f"{a:x}: {text}")
    return a


def synth_o0_body(rng: random.Random, consts: list[int], callees: list[str]) -> list[str]:
    lines: list[str] = []
    addr = _Addr(rng, rng.randrange(0x401000, 0x4FF000, 0x1000))
    _emit(lines, addr, "push rbp")
    _emit(lines, addr, "mov rbp, rsp")
    frame = rng.choice((0x10, 0x18, 0x20, 0x30))
    _emit(lines, addr, f"sub rsp, 0x{frame:x}")
    _emit(lines, addr, "mov [rbp+var_8], rdi")
    if rng.random() < 0.6:
        _emit(lines, addr, "mov [rbp+var_10], rsi")
    for value in consts:
        slot = rng.choice(("eax", "ecx", "edx", "dword ptr [rbp+var_c]"))
        _emit(lines, addr, f"mov {slot}, 0x{value:x}")
        if rng.random() < 0.4:
            _emit(lines, addr, "mov rax, [rbp+var_8]")
    for callee in callees:
        _emit(lines, addr, "mov rdi, rax")
        _emit(lines, addr, f"call {callee}")
    if rng.random() < 0.5:
        count = rng.randrange(2, 60)
        _emit(lines, addr, f"mov ecx, 0x{count:x}")
        top = _emit(lines, addr, "add eax, edx")
        _emit(lines, addr, "dec ecx")
        _emit(lines, addr, f"jne 0x{top:x}")
    _emit(lines, addr, "mov eax, 0")
    _emit(lines, addr, "leave")
    _emit(lines, addr, "ret")
    return lines


def synth_o3_body(rng: random.Random, consts: list[int], callees: list[str]) -> list[str]:
    lines: list[str] = []
    addr = _Addr(rng, rng.randrange(0x501000, 0x5FF000, 0x1000))
    if rng.random() < 0.25:
        _emit(lines, addr, "movdqa xmm0, cs:xmmword_5a1000")
        _emit(lines, addr, "movups xmmword ptr [rdi], xmm0")
    kept = [v for v in consts if rng.random() < 0.8] or consts[:1]
    for value in kept:
        _emit(lines, addr, f"mov dword ptr [rdi+{rng.choice((8, 16, 24)):#x}], 0x{value:x}")
    for callee in callees:
        if rng.random() < 0.7:
            _emit(lines, addr, f"call {callee}")
    if rng.random() < 0.35:
        top = _emit(lines, addr, "add eax, [rdi+rcx*4]")
        _emit(lines, addr, "dec edx")
        _emit(lines, addr, f"jne 0x{top:x}")
    _emit(lines, addr, "xor eax, eax")
    _emit(lines, addr, "ret")
    return lines


def synth_listing(opt_level: str) -> str:
    # constants and callees come from small shared pools so that unrelated
    # functions overlap and the retrieval task is not trivially separable
    pool_rng = random.Random(f"{SEED}:pools")
    const_pool = [pool_rng.randrange(0x20, 1 << pool_rng.choice((8, 16, 24)))
                  for _ in range(20)]
    callee_pool = [f"sub_{pool_rng.randrange(0x400000, 0x40ffff):x}" for _ in range(8)]
    blocks = []
    for symbol in SYMBOLS:
        sym_rng = random.Random(f"{SEED}:{symbol}")
        consts = sym_rng.sample(const_pool, sym_rng.randint(1, 4))
        callees = sym_rng.sample(callee_pool, sym_rng.randint(0, 2))
        body_rng = random.Random(f"{SEED}:{symbol}:{opt_level}")
        body = (synth_o0_body if opt_level == "O0" else synth_o3_body)(
            body_rng, consts, callees
        )
        blocks.append("\n".join([f"; FUNCTION {symbol}", *body]))
    return "\n\n".join(blocks) + "\n"


def synth_document(fn) -> dict:
    """A plausible full feature document: static fields from the analyzer,
    judgement fields drawn per symbol (so pair sides mostly agree), with a
    small optimization-level drift."""
    doc: dict = {}
    sym_rng = random.Random(f"{SEED}:doc:{fn.source_symbol}")
    cnt = sym_rng.randint(1, 2)
    doc["in_param_cnt"] = cnt
    doc["in_param_types"] = [sym_rng.choice(("Integer", "Pointer")) for _ in range(cnt)]
    doc["ret_type"] = sym_rng.choice(("Integer", "None"))
    doc["dominant_operation_categories"] = sym_rng.sample(
        OPERATION_CATEGORIES[:4], sym_rng.randint(1, 2)
    )
    for name in _BOOL_FIELDS:
        doc[name] = sym_rng.random() < 0.3
    doc["float_consts"] = sorted(sym_rng.sample(_FLOAT_POOL, sym_rng.choice((0, 0, 1))))
    doc["inferred_algo"] = sym_rng.choice(ALGO_CATEGORIES[:5])

    doc.update(static_extract(fn).as_dict())

    var_rng = random.Random(f"{SEED}:{fn.source_symbol}:{fn.opt_level}:drift")
    if fn.opt_level != "O0":
        if var_rng.random() < 0.5:
            doc["ret_type"] = var_rng.choice(("Integer", "None"))
        if var_rng.random() < 0.5:
            doc["inferred_algo"] = var_rng.choice(ALGO_CATEGORIES[:5])
        for _ in range(var_rng.randint(1, 3)):
            flipped = var_rng.choice(_BOOL_FIELDS)
            doc[flipped] = not doc[flipped]
        if var_rng.random() < 0.4 and doc["in_param_cnt"] > 1:
            doc["in_param_cnt"] -= 1
            doc["in_param_types"] = doc["in_param_types"][:-1]
    validate(doc)  # sanity: every fixture must be storable
    return doc


def main() -> int:
    check = "--check" in sys.argv
    workdir = ROOT
    listings = workdir / "listings"
    fixtures = workdir / "fixtures"
    if not check:
        if fixtures.exists():
            shutil.rmtree(fixtures)
        listings.mkdir(parents=True, exist_ok=True)
        fixtures.mkdir(parents=True, exist_ok=True)

    corpora = {}
    for opt in ("O0", "O3"):
        text = synth_listing(opt)
        path = listings / f"{LIBRARY}_x86-64_{opt}.lst"
        if check:
            assert path.read_text() == text, f"{path} is stale"
        else:
            path.write_text(text)
        fns = [
            truncate(fn, 128)
            for fn in filter_short(
                parse_listing(text, library=LIBRARY, arch="x86-64", opt_level=opt), 3
            )
        ]
        corpora[opt] = fns

    pairs = build_pairs(corpora["O0"], corpora["O3"], "cross_optimization")
    assert len(pairs) >= 50, f"only {len(pairs)} pairs"
    if not check:
        save_pairs(workdir / "pairs.jsonl", pairs)

    bank = load_example_bank()
    cfg = PromptConfig()  # the cmd_extract defaults
    store = FixtureStore(fixtures, create=not check)
    for fns in corpora.values():
        for fn in fns:
            prompt = build_prompt(fn, cfg, bank)
            response = json.dumps(synth_document(fn), indent=1)
            if check:
                recorded = store.get(prompt_sha256(prompt.system, prompt.user), 0.2)
                assert recorded == response, f"fixture for {fn.id} is stale"
            else:
                store.put(prompt_sha256(prompt.system, prompt.user), 0.2, 0, response)

    # run the shipped pipeline to produce the committed report
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        tmp_path = Path(tmp)
        feature_files = []
        for opt in ("O0", "O3"):
            corpus_file = tmp_path / f"corpus_{opt}.jsonl"
            rc = cli.main([
                "ingest", str(listings / f"{LIBRARY}_x86-64_{opt}.lst"),
                "--library", LIBRARY, "--arch", "x86-64", "--opt-level", opt,
                "-o", str(corpus_file),
            ])
            assert rc == 0
            features_file = tmp_path / f"features_{opt}.jsonl"
            rc = cli.main([
                "extract", "--corpus", str(corpus_file), "--client", "replay",
                "--fixtures", str(fixtures), "-o", str(features_file),
            ])
            assert rc == 0
            feature_files.append(features_file)
        report_file = tmp_path / "report.json"
        rc = cli.main([
            "eval", "--pool", str(workdir / "pairs.jsonl"),
            "--features", str(feature_files[0]), "--features", str(feature_files[1]),
            "--format", "json", "-o", str(report_file),
        ])
        assert rc == 0
        report = report_file.read_bytes()

    expected = workdir / "expected_report.json"
    if check:
        assert expected.read_bytes() == report, "expected_report.json is stale"
        print("mini corpus is up to date")
    else:
        expected.write_bytes(report)
        print(f"wrote {len(pairs)} pairs, {2 * len(SYMBOLS)} fixtures, report -> {expected}")
        print(json.dumps(json.loads(report)["mrr"]))
    return 0


if __name__ == "__main__":
    sys.exit(main())
