"""Generator for the bundled five-language sample dataset.

Produces CoNLL files (200 sentences per language), a manifest, parallel
sentence files, bilingual dictionaries, and substitution lexicons.  The
sentences are template-based but use genuine function words per language so
character-n-gram language identification behaves like it would on real
text.  The same entity name pools appear in every language, which is how
multilingual corpora behave for proper nouns.
"""

from __future__ import annotations

import json
import os

import numpy as np

LANGUAGES = ("en", "fr", "es", "de", "it")

PER_NAMES = [
    "Anna Weber", "Luca Moretti", "Marie Dubois", "Carlos Ortega",
    "Peter Brandt", "Nina Rossi", "Sofia Lindgren", "Tomas Novak",
    "Elena Petrova", "Marco Silva", "Julia Keller", "David Muller",
]
ORG_NAMES = [
    "Orion Group", "Vectra AG", "Banco Altura", "Nordwind SE",
    "Teatro Lirico", "Atlas Energia", "Fonda Capital", "Helios Media",
    "Stadtwerke Nord", "Gruppo Verde",
]
LOC_NAMES = [
    "Lisbon", "Geneva", "Valencia", "Turin", "Marseille", "Heidelberg",
    "Cordoba", "Bergamo", "Nantes", "Salzburg",
]
MISC_NAMES = [
    "World Forum", "Expo Nova", "Giro Verde", "Open Cup",
    "Festival Luz", "Prix Aurora",
]

POOLS = {"PER": PER_NAMES, "ORG": ORG_NAMES, "LOC": LOC_NAMES, "MISC": MISC_NAMES}

# slots: {PER} {ORG} {LOC} {MISC}; three topical families per language
TEMPLATES = {
    "en": [
        "the minister said that {PER} will visit {LOC} next week .",
        "{ORG} announced a new partnership with {ORG} on monday .",
        "shares of {ORG} fell sharply after the report from {LOC} .",
        "{PER} scored twice as the match in {LOC} ended in a draw .",
        "the coach praised {PER} before the {MISC} final .",
        "thousands attended the {MISC} ceremony in {LOC} yesterday .",
        "analysts at {ORG} expect growth in the {LOC} region this year .",
        "{PER} met with investors from {ORG} during the summit .",
        "the council of {LOC} approved the budget proposed by {PER} .",
        "a spokesman for {ORG} declined to comment on the {MISC} bid .",
    ],
    "fr": [
        "le ministre a déclaré que {PER} visitera {LOC} la semaine prochaine .",
        "{ORG} a annoncé un nouveau partenariat avec {ORG} lundi .",
        "les actions de {ORG} ont chuté après le rapport de {LOC} .",
        "{PER} a marqué deux fois et le match à {LOC} s'est terminé par un nul .",
        "l'entraîneur a félicité {PER} avant la finale du {MISC} .",
        "des milliers de personnes ont assisté à la cérémonie du {MISC} à {LOC} hier .",
        "les analystes de {ORG} prévoient une croissance dans la région de {LOC} cette année .",
        "{PER} a rencontré des investisseurs de {ORG} pendant le sommet .",
        "le conseil de {LOC} a approuvé le budget proposé par {PER} .",
        "un porte-parole de {ORG} a refusé de commenter l'offre du {MISC} .",
    ],
    "es": [
        "el ministro dijo que {PER} visitará {LOC} la próxima semana .",
        "{ORG} anunció una nueva alianza con {ORG} el lunes .",
        "las acciones de {ORG} cayeron tras el informe de {LOC} .",
        "{PER} marcó dos veces y el partido en {LOC} terminó en empate .",
        "el entrenador elogió a {PER} antes de la final del {MISC} .",
        "miles de personas asistieron ayer a la ceremonia del {MISC} en {LOC} .",
        "los analistas de {ORG} esperan crecimiento en la región de {LOC} este año .",
        "{PER} se reunió con inversores de {ORG} durante la cumbre .",
        "el consejo de {LOC} aprobó el presupuesto propuesto por {PER} .",
        "un portavoz de {ORG} rechazó comentar la oferta del {MISC} .",
    ],
    "de": [
        "der minister sagte dass {PER} nächste woche {LOC} besuchen wird .",
        "{ORG} kündigte am montag eine neue partnerschaft mit {ORG} an .",
        "die aktien von {ORG} fielen nach dem bericht aus {LOC} deutlich .",
        "{PER} traf zweimal und das spiel in {LOC} endete unentschieden .",
        "der trainer lobte {PER} vor dem finale des {MISC} .",
        "tausende besuchten gestern die feier des {MISC} in {LOC} .",
        "die analysten von {ORG} erwarten dieses jahr wachstum in der region {LOC} .",
        "{PER} traf während des gipfels investoren von {ORG} .",
        "der rat von {LOC} billigte den von {PER} vorgeschlagenen haushalt .",
        "ein sprecher von {ORG} wollte das angebot des {MISC} nicht kommentieren .",
    ],
    "it": [
        "il ministro ha detto che {PER} visiterà {LOC} la prossima settimana .",
        "{ORG} ha annunciato lunedì una nuova alleanza con {ORG} .",
        "le azioni di {ORG} sono crollate dopo il rapporto da {LOC} .",
        "{PER} ha segnato due volte e la partita a {LOC} è finita in pareggio .",
        "l'allenatore ha elogiato {PER} prima della finale del {MISC} .",
        "migliaia di persone hanno assistito ieri alla cerimonia del {MISC} a {LOC} .",
        "gli analisti di {ORG} prevedono una crescita nella regione di {LOC} quest'anno .",
        "{PER} ha incontrato investitori di {ORG} durante il vertice .",
        "il consiglio di {LOC} ha approvato il bilancio proposto da {PER} .",
        "un portavoce di {ORG} ha rifiutato di commentare l'offerta del {MISC} .",
    ],
}

STOPWORDS = {
    "en": "the a an of to in on and that for with from will said by at this next "
          "after before during is are was were it its as",
    "fr": "le la les un une des de du à au aux et que pour avec par sur dans a ont "
          "est sont ce cette il elle",
    "es": "el la los las un una de del a al y que por con en se es son este esta "
          "tras para ante",
    "de": "der die das ein eine des dem den und dass für mit von aus wird sagte "
          "nach vor in im am an ist sind",
    "it": "il la lo le gli un una di del della a al alla e che per con da in ha "
          "hanno è sono questo questa",
}

DICT_EN_FR = {
    "the": "le", "minister": "ministre", "said": "dit", "that": "que",
    "will": "va", "visit": "visiter", "next": "prochaine", "week": "semaine",
    "monday": "lundi", "new": "nouveau", "match": "match", "final": "finale",
    "growth": "croissance", "region": "région", "budget": "budget",
    "ceremony": "cérémonie", "summit": "sommet", "report": "rapport",
    "shares": "actions", "coach": "entraîneur", "good": "bon", "fine": "bien",
}


def _simple_tokenize(text: str) -> list[str]:
    import re

    return re.findall(r"\w+|[^\w\s]", text, re.UNICODE)


def _fill_template(template: str, rng: np.random.Generator) -> tuple[list[str], list[str]]:
    tokens: list[str] = []
    labels: list[str] = []
    for piece in template.split(" "):
        if piece.startswith("{") and piece.endswith("}"):
            etype = piece[1:-1]
            pool = POOLS[etype]
            name = pool[int(rng.integers(len(pool)))]
            parts = name.split(" ")
            tokens.extend(parts)
            labels.append(f"B-{etype}")
            labels.extend(f"I-{etype}" for _ in parts[1:])
        else:
            for tok in _simple_tokenize(piece):
                tokens.append(tok)
                labels.append("O")
    return tokens, labels


def build_sample_corpus(out_dir: str, seed: int = 13,
                        sentences_per_language: int = 200) -> str:
    """Write the sample dataset into out_dir; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = {"languages": {}, "parallel": {}, "dictionaries": {}}

    for lang in LANGUAGES:
        path = os.path.join(out_dir, f"{lang}.conll")
        templates = TEMPLATES[lang]
        with open(path, "w", encoding="utf-8") as f:
            for i in range(sentences_per_language):
                template = templates[int(rng.integers(len(templates)))]
                tokens, labels = _fill_template(template, rng)
                f.write(f"# doc {lang}:{i}\n")
                for tok, lab in zip(tokens, labels):
                    f.write(f"{tok}\t{lab}\n")
                f.write("\n")
        manifest["languages"][lang] = f"{lang}.conll"

    # parallel sentences: same template index and entity draws across languages
    pair_langs = [("en", "fr"), ("en", "es"), ("de", "it")]
    for l1, l2 in pair_langs:
        rows = []
        pair_rng = np.random.default_rng(seed + 17)
        for _ in range(40):
            t_idx = int(pair_rng.integers(len(TEMPLATES[l1])))
            state = int(pair_rng.integers(1 << 31))
            left, _ = _fill_template(TEMPLATES[l1][t_idx], np.random.default_rng(state))
            right, _ = _fill_template(TEMPLATES[l2][t_idx], np.random.default_rng(state))
            rows.append((" ".join(left), " ".join(right)))
        fname = f"parallel_{l1}_{l2}.tsv"
        with open(os.path.join(out_dir, fname), "w", encoding="utf-8") as f:
            for left, right in rows:
                f.write(f"{left}\t{right}\n")
        manifest["parallel"][f"{l1}-{l2}"] = fname

    with open(os.path.join(out_dir, "dict_en_fr.tsv"), "w", encoding="utf-8") as f:
        for src, tgt in DICT_EN_FR.items():
            f.write(f"{src}\t{tgt}\n")
    with open(os.path.join(out_dir, "dict_fr_en.tsv"), "w", encoding="utf-8") as f:
        for src, tgt in DICT_EN_FR.items():
            f.write(f"{tgt}\t{src}\n")
    manifest["dictionaries"]["en-fr"] = "dict_en_fr.tsv"
    manifest["dictionaries"]["fr-en"] = "dict_fr_en.tsv"

    # substitution lexicon: same-type neighbours from each pool
    with open(os.path.join(out_dir, "lexicon.tsv"), "w", encoding="utf-8") as f:
        for etype, pool in POOLS.items():
            for i, name in enumerate(pool):
                for j in (1, 2):
                    f.write(f"{name}\t{pool[(i + j) % len(pool)]}\t{etype}\n")

    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    return manifest_path


def write_stopword_files(out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for lang, words in STOPWORDS.items():
        with open(
            os.path.join(out_dir, f"stopwords_{lang}.txt"), "w", encoding="utf-8"
        ) as f:
            f.write("\n".join(words.split()) + "\n")


def sample_manifest_path() -> str:
    """Path of the packaged sample dataset manifest."""
    from importlib import resources

    return str(resources.files("entitopic.resources").joinpath("sample/manifest.json"))
