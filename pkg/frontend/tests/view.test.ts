// @vitest-environment jsdom
import { describe, expect, it, vi } from "vitest";

import { colorFor } from "../src/palette.js";
import { assignTokens, renderDocument, renderEmptyState } from "../src/view.js";
import { doc, draft } from "./helpers.js";

function mount(): HTMLElement {
  const root = document.createElement("div");
  document.body.appendChild(root);
  return root;
}

describe("assignTokens", () => {
  it("claims each token for at most one draft", () => {
    const snapshot = doc({
      drafts: [
        draft({ id: "a", start: 0, end: 3, label: "FUND" }),
        draft({ id: "b", start: 2, end: 5, label: "UNI" }),  // overlaps a
      ],
    });
    const byToken = assignTokens(snapshot);
    expect(byToken.get(0)?.id).toBe("a");
    expect(byToken.get(2)?.id).toBe("a");
    expect(byToken.get(3)).toBeUndefined();  // clipped, never double-claimed
  });

  it("skips rejected drafts", () => {
    const snapshot = doc({ drafts: [draft({ id: "a", status: "rejected" })] });
    expect(assignTokens(snapshot).size).toBe(0);
  });
});

describe("renderDocument", () => {
  it("renders tokens with entity colors and status classes", () => {
    const root = mount();
    renderDocument(root, doc());
    const tokens = root.querySelectorAll(".token");
    expect(tokens).toHaveLength(8);
    const entity = root.querySelector('.token[data-draft="a"]') as HTMLElement;
    expect(entity.classList.contains("status-proposed")).toBe(true);
    expect(entity.style.getPropertyValue("--entity-color")).toBe(colorFor("FUND"));
  });

  it("never overlaps highlighted spans visually", () => {
    const root = mount();
    const snapshot = doc({
      drafts: [
        draft({ id: "a", start: 0, end: 3 }),
        draft({ id: "b", start: 2, end: 5, label: "UNI" }),
      ],
    });
    renderDocument(root, snapshot);
    for (const token of root.querySelectorAll(".token")) {
      const owners = (token as HTMLElement).dataset.draft;
      expect(owners === undefined || !owners.includes(" ")).toBe(true);
    }
  });

  it("legend covers every label present, including relabel targets", () => {
    const root = mount();
    const snapshot = doc({
      drafts: [
        draft({ id: "a", start: 2, end: 4, label: "FUND", status: "relabeled", new_label: "UNI" }),
        draft({ id: "b", start: 6, end: 7, label: "GRNB" }),
      ],
    });
    renderDocument(root, snapshot);
    const legendLabels = [...root.querySelectorAll(".legend-item")]
      .map((n) => (n as HTMLElement).dataset.label);
    expect(legendLabels).toContain("UNI");
    expect(legendLabels).toContain("GRNB");
    expect(legendLabels).not.toContain("FUND");  // no draft renders as FUND now
  });

  it("relabeled drafts render in the new label's color", () => {
    const root = mount();
    const snapshot = doc({
      drafts: [draft({ id: "a", start: 2, end: 4, status: "relabeled", new_label: "UNI" })],
    });
    renderDocument(root, snapshot);
    const entity = root.querySelector('.token[data-draft="a"]') as HTMLElement;
    expect(entity.style.getPropertyValue("--entity-color")).toBe(colorFor("UNI"));
    const chip = root.querySelector(".draft-chip .chip-label") as HTMLElement;
    expect(chip.textContent).toContain("FUND");
    expect(chip.textContent).toContain("UNI");
  });

  it("shows status and source badges on draft chips", () => {
    const root = mount();
    renderDocument(root, doc());
    const badges = [...root.querySelectorAll(".draft-chip .badge")].map((b) => b.textContent);
    expect(badges).toContain("proposed");
    expect(badges).toContain("wos-grant-index");
  });

  it("zero-draft documents still render tokens for span adding", () => {
    const root = mount();
    renderDocument(root, doc({ drafts: [] }));
    expect(root.querySelectorAll(".token")).toHaveLength(8);
    expect(root.querySelectorAll(".draft-chip")).toHaveLength(0);
  });

  it("click handlers report token index and draft selection", () => {
    const root = mount();
    const onTokenClick = vi.fn();
    const onSelectDraft = vi.fn();
    renderDocument(root, doc(), {}, { onTokenClick, onSelectDraft });
    (root.querySelectorAll(".token")[4] as HTMLElement).click();
    expect(onTokenClick).toHaveBeenCalledWith(4, false);
    (root.querySelector(".draft-chip") as HTMLElement).click();
    expect(onSelectDraft).toHaveBeenCalledWith("a");
  });

  it("renders a notice banner when given one", () => {
    const root = mount();
    renderDocument(root, doc(), { notice: "document changed" });
    expect(root.querySelector(".notice")?.textContent).toContain("document changed");
  });
});

describe("renderEmptyState", () => {
  it("offers a retry", () => {
    const root = mount();
    const onRetry = vi.fn();
    renderEmptyState(root, "document d9 not found", onRetry);
    expect(root.querySelector(".empty-message")?.textContent).toContain("d9");
    (root.querySelector(".retry") as HTMLElement).click();
    expect(onRetry).toHaveBeenCalled();
  });
});
