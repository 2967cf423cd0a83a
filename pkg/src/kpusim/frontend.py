"""Command line frontend.

    kpu asm SOURCE -o IMAGE         assemble to an image file
    kpu run IMAGE                   simulate cycle by cycle
    kpu oracle IMAGE                flat reference execution
    kpu compare IMAGE DUMP          reference-check a machine dump

kpu-asm and kpu-oracle are shorthands for the first and third forms.

Exit codes: 0 success, 1 the program faulted, 2 usage or file format
problems, 3 a comparison found mismatches.
"""

import argparse
import sys

from .assembler import (Assembler, CryptoSafetyError, FormatError, ParseError,
                        parse_image, write_image)
from .codec import Codec, NotAProgramAddress
from .core import Mode, ShadowLeak
from .isa import InstrClass
from .memsys import (OutOfRegion, PhysicalExhausted, UnalignedSupervisorAccess)
from .oracle import (AliasDetected, MaxStepsExceeded, OracleFault, compare,
                     engine_view, interpret, parse_sim_dump, render_dump)
from .pipeline import Engine, MaxCyclesExceeded, SimulationFault

DEFAULT_KEY = 0x00112233445566778899AABBCCDDEEFF

_RUNTIME_FAULTS = (SimulationFault, MaxCyclesExceeded, NotAProgramAddress,
                   PhysicalExhausted, UnalignedSupervisorAccess, OutOfRegion,
                   ShadowLeak, OracleFault, MaxStepsExceeded)


def _parse_key(text):
    try:
        key = int(text, 16)
    except ValueError:
        raise argparse.ArgumentTypeError("key must be hexadecimal") from None
    if key >> 128:
        raise argparse.ArgumentTypeError("key wider than 128 bits")
    return key


def _pct(part, whole):
    return 100.0 * part / whole if whole else 0.0


def render_stats(engine):
    """Cycle accounting table, one block per mode plus the shared units."""
    stats = engine.stats
    total = stats.cycles
    lines = ["@exit  : cycles %d, instructions %d"
             % (total, stats.instructions)]
    for mode in (Mode.USER, Mode.SUPERVISOR):
        ms = stats.mode(mode)
        if not ms.cycles:
            continue
        lines.append("mode %s : %d cycles (%.1f%%)"
                     % (mode.value, ms.cycles, _pct(ms.cycles, total)))
        for cls in InstrClass:
            count = ms.completions[cls]
            if not count:
                continue
            lines.append("  %-10s: %5.1f%%" % (cls.value, _pct(count, total)))
            if cls is InstrClass.LOAD:
                lines.append("  %-10s: %5.1f%%"
                             % ("  (cached)", _pct(ms.loads_cached, total)))
            if cls is InstrClass.STORE:
                lines.append("  %-10s: %5.1f%%"
                             % ("  (cached)", _pct(ms.stores_cached, total)))
        if ms.stalls:
            lines.append("  %-10s: %5.1f%%" % ("stalls", _pct(ms.stalls, total)))
        if ms.refills:
            lines.append("  %-10s: %5.1f%%" % ("refills", _pct(ms.refills, total)))
    bpb = engine.bpb
    lines.append("BPB: %d hits (%d%% right), %d misses (%d%% right)"
                 % (bpb.hits, _pct(bpb.hits_right, bpb.hits),
                    bpb.misses, _pct(bpb.misses_right, bpb.misses)))
    cache = engine.mem.cache
    reads = cache.read_hits + cache.read_misses
    writes = cache.write_hits + cache.write_misses
    lines.append("User Data Cache: %d reads (%d%% hits), %d writes (%d%% hits)"
                 % (reads, _pct(cache.read_hits, reads),
                    writes, _pct(cache.write_hits, writes)))
    return "\n".join(lines) + "\n"


def _build_parser():
    parser = argparse.ArgumentParser(prog="kpu",
                                     description="encrypted-pipeline machine tools")
    sub = parser.add_subparsers(dest="command", required=True)

    asm = sub.add_parser("asm", help="assemble source to an image")
    asm.add_argument("source")
    asm.add_argument("-o", "--output", required=True)
    asm.add_argument("--key", type=_parse_key, default=DEFAULT_KEY)
    asm.add_argument("--seed", type=int, default=0,
                     help="padding stream seed")
    asm.add_argument("--strict", action="store_true",
                     help="fail on crypto-safety diagnostics")
    asm.add_argument("--quiet", action="store_true",
                     help="suppress diagnostics on stderr")

    run = sub.add_parser("run", help="simulate an image")
    run.add_argument("image")
    run.add_argument("--key", type=_parse_key, default=DEFAULT_KEY)
    run.add_argument("--stats", metavar="FILE",
                     help="write the cycle table here instead of stderr")
    run.add_argument("--dump", metavar="FILE",
                     help="write the final machine state here")
    run.add_argument("--trace", action="store_true",
                     help="print per-cycle pipeline occupancy")
    run.add_argument("--max-cycles", type=int, default=5_000_000)
    run.add_argument("--user-words", type=int, default=None)
    run.add_argument("--cache-entries", type=int, default=None)
    run.add_argument("--bpb-entries", type=int, default=64)

    orc = sub.add_parser("oracle", help="run the flat reference interpreter")
    orc.add_argument("image")
    orc.add_argument("--key", type=_parse_key, default=DEFAULT_KEY)
    orc.add_argument("--max-steps", type=int, default=2_000_000)

    cmp_ = sub.add_parser("compare",
                          help="check a machine dump against the reference")
    cmp_.add_argument("image")
    cmp_.add_argument("dump")
    cmp_.add_argument("--key", type=_parse_key, default=DEFAULT_KEY)
    cmp_.add_argument("--max-steps", type=int, default=2_000_000)
    return parser


def _read(path):
    try:
        with open(path) as handle:
            return handle.read()
    except OSError as exc:
        print("kpu: %s" % exc, file=sys.stderr)
        return None


def _cmd_asm(args):
    source = _read(args.source)
    if source is None:
        return 2
    try:
        image, diagnostics = Assembler(Codec(args.key), args.seed).assemble(
            source, strict=args.strict)
    except (ParseError, CryptoSafetyError) as exc:
        print("kpu asm: %s" % exc, file=sys.stderr)
        return 2
    if diagnostics and not args.quiet:
        for diag in diagnostics:
            print("kpu asm: warning: %s" % diag, file=sys.stderr)
    with open(args.output, "w") as handle:
        handle.write(write_image(image))
    return 0


def _cmd_run(args):
    text = _read(args.image)
    if text is None:
        return 2
    try:
        image = parse_image(text)
    except FormatError as exc:
        print("kpu run: %s" % exc, file=sys.stderr)
        return 2
    engine = Engine(image, Codec(args.key), user_words=args.user_words,
                    cache_entries=args.cache_entries,
                    bpb_entries=args.bpb_entries, trace=args.trace)
    try:
        engine.run(max_cycles=args.max_cycles)
    except _RUNTIME_FAULTS as exc:
        if engine.trace_lines:
            print("\n".join(engine.trace_lines))
        print("kpu run: fault: %s" % exc, file=sys.stderr)
        return 1
    if engine.trace_lines:
        print("\n".join(engine.trace_lines))
    for value in engine.outputs:
        print(value)
    table = render_stats(engine)
    if args.stats:
        with open(args.stats, "w") as handle:
            handle.write(table)
    else:
        sys.stderr.write(table)
    if args.dump:
        with open(args.dump, "w") as handle:
            handle.write(render_dump(engine_view(engine)))
    return 0


def _cmd_oracle(args):
    text = _read(args.image)
    if text is None:
        return 2
    try:
        image = parse_image(text)
    except FormatError as exc:
        print("kpu oracle: %s" % exc, file=sys.stderr)
        return 2
    try:
        result = interpret(image, Codec(args.key), max_steps=args.max_steps)
    except _RUNTIME_FAULTS as exc:
        print("kpu oracle: fault: %s" % exc, file=sys.stderr)
        return 1
    for value in result.outputs:
        print(value)
    for i, value in enumerate(result.regs):
        print("r%02d 0x%08x" % (i, value))
    for addr in sorted(result.user_mem):
        print("mem 0x%08x 0x%08x" % (addr, result.user_mem[addr]))
    print("@exit  : steps %d" % result.steps, file=sys.stderr)
    return 0


def _cmd_compare(args):
    text = _read(args.image)
    dump_text = _read(args.dump) if text is not None else None
    if text is None or dump_text is None:
        return 2
    try:
        image = parse_image(text)
        view = parse_sim_dump(dump_text)
    except (FormatError, ValueError) as exc:
        print("kpu compare: %s" % exc, file=sys.stderr)
        return 2
    cdc = Codec(args.key)
    try:
        result = interpret(image, cdc, max_steps=args.max_steps)
    except _RUNTIME_FAULTS as exc:
        print("kpu compare: reference fault: %s" % exc, file=sys.stderr)
        return 1
    try:
        problems = compare(view, result, cdc)
    except AliasDetected as exc:
        print("kpu compare: %s" % exc, file=sys.stderr)
        return 3
    print("MISMATCHES %d" % len(problems))
    for line in problems:
        print(line)
    return 3 if problems else 0


_COMMANDS = {"asm": _cmd_asm, "run": _cmd_run, "oracle": _cmd_oracle,
             "compare": _cmd_compare}


def main(argv=None):
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


def asm_entry(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    return main(["asm"] + list(argv))


def oracle_entry(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    return main(["oracle"] + list(argv))


if __name__ == "__main__":
    sys.exit(main())
