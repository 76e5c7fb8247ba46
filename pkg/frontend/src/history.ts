/**
 * Linear undo/redo over immutable state snapshots. The cursor always points
 * at the current state; undo and redo are exact inverses while no new edit
 * trims the redo tail.
 */
export class SessionHistory<T> {
  private snapshots: T[] = [];
  private cursor = -1;

  constructor(initial: T, private clone: (value: T) => T) {
    this.push(initial);
  }

  get current(): T {
    return this.clone(this.snapshots[this.cursor]);
  }

  get canUndo(): boolean {
    return this.cursor > 0;
  }

  get canRedo(): boolean {
    return this.cursor < this.snapshots.length - 1;
  }

  push(state: T): void {
    this.snapshots.length = this.cursor + 1; // drop the redo tail
    this.snapshots.push(this.clone(state));
    this.cursor = this.snapshots.length - 1;
  }

  undo(): T {
    if (this.canUndo) this.cursor--;
    return this.current;
  }

  redo(): T {
    if (this.canRedo) this.cursor++;
    return this.current;
  }
}
