import { RELABEL_ORDER } from "./palette.js";

export type KeyAction =
  | { kind: "accept" }
  | { kind: "reject" }
  | { kind: "relabel"; label: string }
  | { kind: "next-draft" }
  | { kind: "prev-draft" }
  | { kind: "next-doc" }
  | { kind: "prev-doc" }
  | { kind: "add-span" }
  | { kind: "clear-selection" };

/**
 * Keyboard map: a=accept, r=reject, 1-6 relabel to the fixed entity order,
 * j/k move between drafts, [/] between documents, n adds a span over the
 * current token selection, Escape clears it.
 */
export function actionForKey(key: string): KeyAction | null {
  switch (key) {
    case "a":
      return { kind: "accept" };
    case "r":
      return { kind: "reject" };
    case "j":
    case "ArrowDown":
      return { kind: "next-draft" };
    case "k":
    case "ArrowUp":
      return { kind: "prev-draft" };
    case "]":
      return { kind: "next-doc" };
    case "[":
      return { kind: "prev-doc" };
    case "n":
      return { kind: "add-span" };
    case "Escape":
      return { kind: "clear-selection" };
    default: {
      const num = Number(key);
      if (Number.isInteger(num) && num >= 1 && num <= RELABEL_ORDER.length) {
        return { kind: "relabel", label: RELABEL_ORDER[num - 1] };
      }
      return null;
    }
  }
}
