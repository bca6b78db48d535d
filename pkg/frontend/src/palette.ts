/**
 * Fixed, colorblind-safe entity palette (Okabe-Ito hues). The mapping never
 * changes at runtime so exported screenshots stay comparable; unknown labels
 * fall back to a neutral tone.
 */

export const ENTITY_COLORS: Record<string, string> = {
  FUND: "#0072B2",
  COR: "#E69F00",
  UNI: "#009E73",
  IND: "#CC79A7",
  MISC: "#999999",
  GRNB: "#D55E00",
  ORG: "#56B4E9",
};

export const FALLBACK_COLOR = "#6b5b95";

/** Relabel shortcut order: keys 1..6. */
export const RELABEL_ORDER = ["FUND", "COR", "UNI", "IND", "MISC", "GRNB"] as const;

export function colorFor(label: string): string {
  return ENTITY_COLORS[label] ?? FALLBACK_COLOR;
}

/** Legend entries covering every label present in a document. */
export function legendFor(labels: Iterable<string>): { label: string; color: string }[] {
  const present = new Set(labels);
  const ordered: string[] = [];
  for (const label of Object.keys(ENTITY_COLORS)) {
    if (present.has(label)) ordered.push(label);
  }
  for (const label of [...present].sort()) {
    if (!(label in ENTITY_COLORS)) ordered.push(label);
  }
  return ordered.map((label) => ({ label, color: colorFor(label) }));
}
