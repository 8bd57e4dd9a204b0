"""Record a live service exchange into the test fixture.

Drives one writer session through a fixed action script against the real
service and saves every message, in order, to test/fixtures/transcript.json.
The UI test suite replays the server side of this file through a fake
socket and checks the client side matches what the UI emits, so the
fixture is the ground truth for protocol conformance. Rerun after any
protocol change:

    python3 tools/record_transcript.py
"""

import json
from pathlib import Path

from fastapi.testclient import TestClient

from smal.service import create_app
from smal.sim import parse_world

WORLD = """\
######
#R...#
#....#
#..V.#
######
heading E
"""

SESSION = "ui"

# (message to send, number of announcements to read back) per exchange;
# None sends nothing (the connect handshake also announces once).
SCRIPT = [
    None,
    {"type": "command", "session": SESSION, "atom": "forward"},
    {"type": "command", "session": SESSION, "atom": "turn_left"},
    {"type": "command", "session": SESSION, "atom": "forward"},  # wall ahead
    {"type": "command", "session": SESSION, "atom": "turn_right"},
    {"type": "command", "session": SESSION, "atom": "backward"},
    {"type": "control", "op": "stop_demo"},
    {"type": "control", "op": "start_demo"},
    {"type": "command", "session": SESSION, "atom": "forward"},
    {"type": "control", "op": "stop_demo"},
    {"type": "control", "op": "reset"},
]


def main() -> None:
    out = Path(__file__).resolve().parent.parent / "test" / "fixtures"
    out.mkdir(parents=True, exist_ok=True)
    exchanges = []
    app = create_app(parse_world(WORLD), tick_hz=50)
    with TestClient(app) as client:
        with client.websocket_connect(f"/ws?session={SESSION}") as ws:
            for msg in SCRIPT:
                if msg is not None:
                    ws.send_text(json.dumps(msg))
                server = [json.loads(ws.receive_text()) for _ in range(2)]
                kinds = [m["type"] for m in server]
                assert kinds == ["frame", "state"], kinds
                exchanges.append({"client": msg, "server": server})
            # a second connection is a spectator; its commands are refused
            with client.websocket_connect(f"/ws?session={SESSION}") as spect:
                for _ in range(2):
                    spect.receive_text()
                spect.send_text(json.dumps(
                    {"type": "command", "session": SESSION, "atom": "forward"}))
                spectator_error = json.loads(spect.receive_text())
                assert spectator_error["type"] == "error", spectator_error

    fixture = {
        "world": WORLD,
        "session": SESSION,
        "exchanges": exchanges,
        "spectator_error": spectator_error,
    }
    path = out / "transcript.json"
    path.write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n")
    steps = [m["step"] for e in exchanges for m in e["server"]
             if m["type"] == "frame"]
    print(f"wrote {path} ({len(exchanges)} exchanges, frame steps {steps})")


if __name__ == "__main__":
    main()
