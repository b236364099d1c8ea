/** Click-to-play audio for a selected point; replay reuses one element so it
 * stays idempotent. Points without an audio reference get a disabled control. */

import { ApiClient, BundlePoint } from './api.js';

export class AudioPlayer {
  private element: HTMLAudioElement | null = null;
  private currentId: string | null = null;

  constructor(private readonly api: ApiClient, private readonly noticeEl: HTMLElement) {}

  canPlay(point: BundlePoint): boolean {
    return point.audio_ref !== undefined;
  }

  async play(point: BundlePoint): Promise<void> {
    this.noticeEl.textContent = '';
    if (!this.canPlay(point)) {
      this.noticeEl.textContent = `no audio for ${point.lexeme} (${point.id})`;
      return;
    }
    if (this.currentId !== point.id || this.element === null) {
      this.element = new Audio(this.api.audioUrl(point.id));
      this.currentId = point.id;
    } else {
      this.element.currentTime = 0;
    }
    try {
      await this.element.play();
    } catch (err) {
      this.noticeEl.textContent = `audio unavailable for ${point.id}: ${String(err)}`;
    }
  }
}
