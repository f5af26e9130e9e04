"""Pass/fail lines collected by the acceptance suite, printed at session end."""
LINES: list[str] = []


def record(name: str, ok: bool, detail: str) -> bool:
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    LINES.append(line)
    print(line)
    return ok
