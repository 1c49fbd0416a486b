# tools/mocks.py
"""In-process mock executors for the bundled registry, and noise-tool generation."""
import hashlib
import random
import re

from tools.schema import Category, InvalidArgumentsFailure, Parameter, ToolSchema


def _stable_int(text: str, modulo: int) -> int:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % modulo


# ── Executors ────────────────────────────────────────────────────────────────
# Each executor takes the validated argument map and returns text content.

def get_weather(args: dict) -> str:
    city = args["city"]
    celsius = _stable_int(city.lower(), 35) - 5
    units = args.get("units", "metric")
    temp = f"{celsius}°C" if units == "metric" else f"{round(celsius * 9 / 5 + 32)}°F"
    sky = ["sunny", "cloudy", "light rain", "windy"][_stable_int(city, 4)]
    return f"Weather in {city}: {temp}, {sky}."


def web_search(args: dict) -> str:
    q = args["query"]
    return f"Top results for '{q}': [1] Overview of {q}. [2] Recent coverage of {q}."


def fetch_url(args: dict) -> str:
    return f"Fetched {args['url']}: page text ({_stable_int(args['url'], 900) + 100} words)."


def news_headlines(args: dict) -> str:
    limit = int(args.get("limit", 3))
    topic = args["topic"]
    return "\n".join(f"{i + 1}. {topic.title()} update #{i + 1}" for i in range(limit))


def book_flight(args: dict) -> str:
    ref = _stable_int(f"{args['origin']}-{args['destination']}-{args['date']}", 10**6)
    return (
        f"Flight booked from {args['origin']} to {args['destination']} on {args['date']}. "
        f"Confirmation FL{ref:06d}."
    )


def reserve_hotel(args: dict) -> str:
    ref = _stable_int(f"{args['city']}-{args['check_in']}", 10**6)
    return (
        f"Hotel reserved in {args['city']} from {args['check_in']} for {args['nights']} nights. "
        f"Confirmation HT{ref:06d}."
    )


def convert_currency(args: dict) -> str:
    rate = 0.5 + _stable_int(f"{args['source']}{args['target']}", 1000) / 500
    amount = float(args["amount"])
    return f"{amount:.2f} {args['source']} = {amount * rate:.2f} {args['target']} (rate {rate:.3f})."


_ARITHMETIC = re.compile(r"^[\d\s.+\-*/()]+$")


def calculator(args: dict) -> str:
    expr = args["expression"]
    if not _ARITHMETIC.match(expr):
        raise InvalidArgumentsFailure(f"unsupported expression: {expr!r}")
    # restricted to digits and arithmetic operators by the pattern above
    value = eval(expr, {"__builtins__": {}}, {})  # noqa: S307
    return f"{expr} = {value}"


def analyze_table(args: dict) -> str:
    rows = _stable_int(args["path"], 5000) + 10
    return f"Table {args['path']} has {rows} rows. Answer to '{args['question']}': see column summary."


def plot_chart(args: dict) -> str:
    return f"Rendered a {args['kind']} chart of {args['path']} to chart.png."


def read_file(args: dict) -> str:
    return f"Contents of {args['path']}: {_stable_int(args['path'], 200) + 1} lines of text."


def write_file(args: dict) -> str:
    return f"Wrote {len(args['content'])} characters to {args['path']}."


def list_files(args: dict) -> str:
    base = args["directory"].rstrip("/")
    return "\n".join(f"{base}/file_{i}.txt" for i in range(3))


def generate_image(args: dict) -> str:
    return f"Generated image img_{_stable_int(args['prompt'], 10**5):05d}.png for '{args['prompt']}'."


def edit_image(args: dict) -> str:
    return f"Edited {args['path']}: {args['instruction']}."


def make_slides(args: dict) -> str:
    return f"Created a 10-slide deck on {args['topic']}: slides_{_stable_int(args['topic'], 10**4):04d}.pptx."


def write_report(args: dict) -> str:
    return f"Drafted a text report on {args['topic']} (4 sections)."


def translate_text(args: dict) -> str:
    return f"[{args['target_language']}] {args['text']}"


def get_stock_price(args: dict) -> str:
    cents = _stable_int(args["symbol"], 50000) + 100
    return f"{args['symbol']} last traded at {cents / 100:.2f} USD."


def create_calendar_event(args: dict) -> str:
    return f"Event '{args['title']}' created on {args['date']}."


def noise(args: dict) -> str:
    return "ok"


EXECUTORS = {
    fn.__name__: fn
    for fn in (
        get_weather, web_search, fetch_url, news_headlines, book_flight, reserve_hotel,
        convert_currency, calculator, analyze_table, plot_chart, read_file, write_file,
        list_files, generate_image, edit_image, make_slides, write_report, translate_text,
        get_stock_price, create_calendar_event, noise,
    )
}


# ── Noise tools ──────────────────────────────────────────────────────────────

_CONSONANTS = "qxzjvk"
_VOWELS = "uyo"


def _nonsense_word(rng: random.Random) -> str:
    return "".join(rng.choice(_CONSONANTS) + rng.choice(_VOWELS) for _ in range(3))


def noise_tools(n: int, seed: int = 0, prefix: str = "noise") -> list[ToolSchema]:
    """
    ``n`` deterministic distractor tools whose names and descriptions are made
    of nonsense words, so they share no tokens with natural-language queries.
    """
    rng = random.Random(seed)
    tools = []
    for i in range(n):
        words = [_nonsense_word(rng) for _ in range(6)]
        tools.append(
            ToolSchema(
                tool_name=f"{prefix}_{i:03d}_{words[0]}",
                category=Category.OTHER,
                description=" ".join(words[1:]),
                enriched_description=" ".join(words[1:]),
                parameters=(Parameter("value", "string", required=False),),
                metadata={"executor": "noise", "concurrency_safe": True},
            )
        )
    return tools
