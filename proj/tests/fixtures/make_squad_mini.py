#!/usr/bin/env python3
#
# Copyright 2026 The qrel Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""Writes tests/data/squad_mini.json, a small SQuAD-format dev set.

Paragraphs are fictional biographies filled from fixed tables, so the file
is reproducible and free to redistribute. Each paragraph carries four
questions whose answers are spans of the context.

  python3 tests/fixtures/make_squad_mini.py --out tests/data/squad_mini.json
"""

import argparse
import json

PEOPLE = [
    ("Maria Alvarez", "she", "her", "painter", "Lisbon", 1921, "the Harbor Academy", "river landscapes"),
    ("Tomas Berg", "he", "his", "engineer", "Oslo", 1898, "the Northern Institute", "steel bridges"),
    ("Amina Diallo", "she", "her", "physician", "Dakar", 1954, "the Coastal Hospital", "malaria vaccines"),
    ("Kenji Watanabe", "he", "his", "architect", "Osaka", 1936, "the Imperial College", "wooden temples"),
    ("Elena Petrova", "she", "her", "chemist", "Kazan", 1909, "the State University", "synthetic dyes"),
    ("Samuel Okafor", "he", "his", "historian", "Lagos", 1962, "the National Archive", "colonial trade"),
    ("Clara Jensen", "she", "her", "composer", "Aarhus", 1887, "the Royal Conservatory", "choral music"),
    ("Diego Romero", "he", "his", "astronomer", "Cordoba", 1945, "the Southern Observatory", "variable stars"),
    ("Lucia Moretti", "she", "her", "novelist", "Turin", 1930, "the Alpine Press", "mountain villages"),
    ("Victor Dubois", "he", "his", "botanist", "Lyon", 1875, "the Botanical Society", "alpine orchids"),
    ("Hana Novak", "she", "her", "mathematician", "Brno", 1968, "the Technical University", "prime numbers"),
    ("Omar Haddad", "he", "his", "geologist", "Amman", 1951, "the Desert Survey", "ancient aquifers"),
    ("Ingrid Larsen", "she", "her", "explorer", "Bergen", 1902, "the Polar Society", "arctic glaciers"),
    ("Rafael Costa", "he", "his", "sculptor", "Porto", 1919, "the Fine Arts School", "bronze statues"),
    ("Yuki Tanaka", "she", "her", "biologist", "Sendai", 1977, "the Marine Laboratory", "coral reefs"),
    ("Peter Novak", "he", "his", "economist", "Prague", 1940, "the Central Bank", "rural wages"),
    ("Sofia Lind", "she", "her", "linguist", "Uppsala", 1958, "the Language Council", "northern dialects"),
    ("Arjun Mehta", "he", "his", "physicist", "Pune", 1964, "the Research Centre", "solar cells"),
    ("Greta Hoffmann", "she", "her", "photographer", "Leipzig", 1926, "the City Gallery", "factory workers"),
    ("Luis Fernandez", "he", "his", "poet", "Seville", 1912, "the Poetry Circle", "lost harbors"),
    ("Nadia Haddad", "she", "her", "lawyer", "Beirut", 1949, "the Supreme Court", "refugee rights"),
    ("Jonas Weber", "he", "his", "inventor", "Bremen", 1881, "the Patent Office", "electric clocks"),
    ("Aiko Mori", "she", "her", "potter", "Kyoto", 1933, "the Craft Guild", "glazed bowls"),
    ("Marco Bianchi", "he", "his", "cyclist", "Verona", 1971, "the National Team", "mountain stages"),
    ("Freya Olsen", "she", "her", "pilot", "Tromso", 1915, "the Air Service", "mail routes"),
    ("Hugo Martin", "he", "his", "chef", "Nantes", 1966, "the Grand Hotel", "seafood stews"),
    ("Leila Karimi", "she", "her", "architect", "Shiraz", 1959, "the Urban Council", "public gardens"),
    ("Anton Kral", "he", "his", "violinist", "Vienna", 1894, "the Philharmonic", "folk melodies"),
    ("Rosa Lopez", "she", "her", "teacher", "Valencia", 1938, "the Village School", "children's songs"),
    ("Erik Strand", "he", "his", "sailor", "Stavanger", 1907, "the Merchant Fleet", "trade winds"),
]

RIVALS = ["Hector Vance", "Irene Wolfe", "Felix Gray", "Mira Stone", "Caleb Frost", "Nora Quinn"]


def paragraph(i, person):
    name, subj, poss, job, city, year, inst, topic = person
    first = name.split()[0]
    rival = RIVALS[i % len(RIVALS)]
    members = 12 + (i * 7) % 40
    article = "an" if job[0] in "aeiou" else "a"
    context = (
        f"{name} was {article} {job} born in {city} in {year}. "
        f"After studying at {inst}, {subj} became known for work on {topic}. "
        f"In {year + 31}, {first} shared {poss} results with {rival}, who led a group of {members} students. "
        f"{subj.capitalize()} spent {poss} final years in {city}, where a street now bears {poss} name."
    )
    qas = [
        (f"Where was {name} born?", city),
        (f"What was {first} known for?", topic),
        (f"Who did {first} share {poss} results with in {year + 31}?", rival),
        (f"How many students did {rival} lead?", str(members)),
    ]
    out = []
    for k, (q, a) in enumerate(qas):
        start = context.index(a)
        out.append({"id": f"p{i:02d}q{k}", "question": q, "answers": [{"text": a, "answer_start": start}]})
    return {"context": context, "qas": out}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    args = ap.parse_args()
    data = []
    for a in range(0, len(PEOPLE), 5):
        data.append({
            "title": f"Biographies {a // 5 + 1}",
            "paragraphs": [paragraph(i, PEOPLE[i]) for i in range(a, min(a + 5, len(PEOPLE)))],
        })
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump({"version": "1.1", "data": data}, f, indent=1, ensure_ascii=False)
        f.write("\n")


if __name__ == "__main__":
    main()
